#include "ktraj/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ktraj/errors.hpp"

namespace ktraj::io {

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    template <class T>
    T get(const char* what) {
        std::array<unsigned char, sizeof(T)> bytes;
        in_.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
            throw FormatError(std::string("truncated file while reading ") + what,
                              offset_ + static_cast<std::uint64_t>(in_.gcount()));
        }
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
        T value;
        std::memcpy(&value, bytes.data(), sizeof(T));
        offset_ += sizeof(T);
        return value;
    }

    void expect_magic(const char (&magic)[5]) {
        for (int i = 0; i < 4; ++i) {
            const auto c = get<unsigned char>("magic");
            if (c != static_cast<unsigned char>(magic[i])) {
                throw FormatError(std::string("bad magic, expected \"") + magic + "\"", offset_ - 1);
            }
        }
    }

    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) {
            throw FormatError("trailing bytes after payload", offset_);
        }
    }

    std::uint64_t offset() const { return offset_; }

private:
    std::istream& in_;
    std::uint64_t offset_ = 0;
};

void format_number(std::ostream& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out << buf;
}

}  // namespace

void write_spkt(std::ostream& out, const TrajectoryFile& file) {
    const SamplingPattern& k = file.pattern;
    k.validate();
    if (file.k_max.size() != static_cast<std::size_t>(k.dims)) {
        throw InputError("spkt: k_max must have one entry per axis");
    }
    out.write("SPKT", 4);
    put_le<std::uint32_t>(out, kSpktVersion);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(k.dims));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(k.shots));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(k.samples));
    for (double v : file.k_max) put_le<double>(out, v);
    put_le<double>(out, file.raster_dt);
    for (double c : k.coords) put_le<float>(out, static_cast<float>(c));
    if (!out) throw InputError("spkt: write failed");
}

TrajectoryFile read_spkt(std::istream& in) {
    Reader r(in);
    r.expect_magic("SPKT");
    const std::uint64_t version_at = r.offset();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kSpktVersion) {
        throw FormatError("unsupported SPKT version " + std::to_string(version), version_at);
    }
    const std::uint64_t dims_at = r.offset();
    const auto dims = r.get<std::uint8_t>("dims");
    if (dims != 2 && dims != 3) throw FormatError("dims must be 2 or 3", dims_at);
    const auto shots = r.get<std::uint32_t>("shots");
    const auto samples = r.get<std::uint32_t>("samples");
    TrajectoryFile file;
    for (int a = 0; a < dims; ++a) file.k_max.push_back(r.get<double>("k_max"));
    file.raster_dt = r.get<double>("raster_dt");
    file.pattern = SamplingPattern(shots, samples, dims);
    for (double& c : file.pattern.coords) {
        const std::uint64_t at = r.offset();
        const float v = r.get<float>("coordinates");
        if (!std::isfinite(v)) throw FormatError("non-finite coordinate", at);
        c = static_cast<double>(v);
    }
    r.expect_end();
    return file;
}

void save_spkt(const std::string& path, const TrajectoryFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    write_spkt(out, file);
}

TrajectoryFile load_spkt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    return read_spkt(in);
}

void write_csv(std::ostream& out, const SamplingPattern& k) {
    k.validate();
    out << "shot,sample,kx,ky";
    if (k.dims == 3) out << ",kz";
    out << '\n';
    for (std::size_t s = 0; s < k.shots; ++s) {
        for (std::size_t n = 0; n < k.samples; ++n) {
            out << s << ',' << n;
            for (int a = 0; a < k.dims; ++a) {
                out << ',';
                format_number(out, k.at(s, n, a));
            }
            out << '\n';
        }
    }
}

SamplingPattern read_csv(std::istream& in) {
    std::string line;
    std::uint64_t offset = 0;
    if (!std::getline(in, line)) throw FormatError("empty CSV file", 0);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    int dims = 0;
    if (line == "shot,sample,kx,ky") {
        dims = 2;
    } else if (line == "shot,sample,kx,ky,kz") {
        dims = 3;
    } else {
        throw FormatError("unexpected CSV header \"" + line + "\"", 0);
    }
    offset += line.size() + 1;

    std::vector<double> coords;
    std::size_t shots = 0, samples = 0, row_shot = 0, row_sample = 0;
    bool first = true;
    while (std::getline(in, line)) {
        const std::uint64_t line_at = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != static_cast<std::size_t>(2 + dims)) {
            throw FormatError("expected " + std::to_string(2 + dims) + " fields", line_at);
        }
        std::size_t shot = 0, sample = 0;
        try {
            std::size_t pos = 0;
            shot = std::stoull(fields[0], &pos);
            if (pos != fields[0].size()) throw std::invalid_argument("shot");
            sample = std::stoull(fields[1], &pos);
            if (pos != fields[1].size()) throw std::invalid_argument("sample");
            for (int a = 0; a < dims; ++a) {
                const double v = std::stod(fields[2 + a], &pos);
                if (pos != fields[2 + a].size() || !std::isfinite(v)) throw std::invalid_argument("coord");
                coords.push_back(v);
            }
        } catch (const std::exception&) {
            throw FormatError("malformed CSV row", line_at);
        }
        // Rows must enumerate shots in order, each with samples 0..N_s-1.
        if (first) {
            if (shot != 0 || sample != 0) throw FormatError("CSV must start at shot 0, sample 0", line_at);
            first = false;
        } else if (sample == 0 && shot == row_shot + 1) {
            if (shots == 0) samples = row_sample + 1;
            if (row_sample + 1 != samples) throw FormatError("ragged shot lengths", line_at);
            ++shots;
        } else if (sample != row_sample + 1 || shot != row_shot) {
            throw FormatError("rows out of order", line_at);
        }
        row_shot = shot;
        row_sample = sample;
    }
    if (first) throw FormatError("CSV has no data rows", offset);
    if (shots == 0) samples = row_sample + 1;
    if (row_sample + 1 != samples) throw FormatError("ragged shot lengths", offset);
    ++shots;

    SamplingPattern k(shots, samples, dims);
    k.coords = std::move(coords);
    return k;
}

TrajectoryFile load_trajectory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    in.clear();
    in.seekg(0);
    if (std::memcmp(magic, "SPKT", 4) == 0) return read_spkt(in);
    TrajectoryFile file;
    file.pattern = read_csv(in);
    return file;
}

void write_spkd(std::ostream& out, const TargetDensity& density) {
    out.write("SPKD", 4);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(density.dims));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(density.side()));
    for (double v : density.grid) put_le<double>(out, v);
    if (!out) throw InputError("spkd: write failed");
}

TargetDensity read_spkd(std::istream& in) {
    Reader r(in);
    r.expect_magic("SPKD");
    const std::uint64_t dims_at = r.offset();
    const auto dims = r.get<std::uint8_t>("dims");
    if (dims != 2 && dims != 3) throw FormatError("dims must be 2 or 3", dims_at);
    const std::uint64_t side_at = r.offset();
    const auto side = r.get<std::uint32_t>("grid side");
    if (side % 2 == 0 || side < 5) throw FormatError("grid side must be odd and >= 5", side_at);
    const std::size_t n = static_cast<std::size_t>(side) * side * (dims == 3 ? side : 1);
    std::vector<double> grid(n);
    for (double& v : grid) {
        const std::uint64_t at = r.offset();
        v = r.get<double>("grid values");
        if (!std::isfinite(v) || v < 0.0) throw FormatError("density values must be finite and >= 0", at);
    }
    r.expect_end();
    return density_from_grid(std::move(grid), dims);
}

void save_spkd(const std::string& path, const TargetDensity& density) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    write_spkd(out, density);
}

TargetDensity load_spkd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    return read_spkd(in);
}

}  // namespace ktraj::io
