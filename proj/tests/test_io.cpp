#include <doctest.h>

#include <cstring>
#include <sstream>

#include "ktraj/errors.hpp"
#include "ktraj/io.hpp"
#include "oracles.hpp"

using namespace ktraj;

namespace {

io::TrajectoryFile sample_file(int dims = 2) {
    io::TrajectoryFile f;
    f.pattern = oracle::random_pattern(3, 5, dims, 42, -1.0, 1.0);
    for (double& c : f.pattern.coords) c = static_cast<double>(static_cast<float>(c));
    f.k_max.assign(static_cast<std::size_t>(dims), 139.13043478260869);
    f.raster_dt = 10e-6;
    return f;
}

std::string bytes_of(const io::TrajectoryFile& f) {
    std::ostringstream out(std::ios::binary);
    io::write_spkt(out, f);
    return out.str();
}

template <class T>
T read_le(const std::string& s, std::size_t at) {
    T v;
    std::memcpy(&v, s.data() + at, sizeof(T));
    return v;
}

}  // namespace

TEST_CASE("SPKT byte layout") {
    io::TrajectoryFile f;
    f.pattern = SamplingPattern(1, 2, 2);
    f.pattern.coords = {0.5, -0.25, 1.0, 0.0};
    f.k_max = {100.0, 50.0};
    f.raster_dt = 1e-5;
    const std::string s = bytes_of(f);
    REQUIRE(s.size() == 4 + 4 + 1 + 4 + 4 + 16 + 8 + 16);
    CHECK(s.substr(0, 4) == "SPKT");
    const unsigned char v[4] = {0x01, 0x00, 0x00, 0x00};
    CHECK(std::memcmp(s.data() + 4, v, 4) == 0);
    CHECK(static_cast<unsigned char>(s[8]) == 2);
    CHECK(read_le<std::uint32_t>(s, 9) == 1);
    CHECK(read_le<std::uint32_t>(s, 13) == 2);
    CHECK(read_le<double>(s, 17) == 100.0);
    CHECK(read_le<double>(s, 25) == 50.0);
    CHECK(read_le<double>(s, 33) == 1e-5);
    CHECK(read_le<float>(s, 41) == 0.5f);
    CHECK(read_le<float>(s, 45) == -0.25f);
    CHECK(read_le<float>(s, 49) == 1.0f);
    CHECK(read_le<float>(s, 53) == 0.0f);
}

TEST_CASE("SPKT round trip is bitwise exact") {
    for (int dims : {2, 3}) {
        const io::TrajectoryFile f = sample_file(dims);
        const std::string s = bytes_of(f);
        std::istringstream in(s, std::ios::binary);
        const io::TrajectoryFile g = io::read_spkt(in);
        CHECK(g.pattern.shots == f.pattern.shots);
        CHECK(g.pattern.samples == f.pattern.samples);
        CHECK(g.pattern.dims == dims);
        CHECK(std::memcmp(g.pattern.coords.data(), f.pattern.coords.data(), f.pattern.coords.size() * 8) == 0);
        CHECK(g.k_max == f.k_max);
        CHECK(g.raster_dt == f.raster_dt);
        CHECK(bytes_of(g) == s);
    }
}

TEST_CASE("SPKT format errors carry byte offsets") {
    const std::string good = bytes_of(sample_file());
    {
        std::string s = good;
        s[2] = 'X';
        std::istringstream in(s);
        try {
            io::read_spkt(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 2);
        }
    }
    {
        std::string s = good;
        s[4] = 2;
        std::istringstream in(s);
        try {
            io::read_spkt(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 4);
        }
    }
    {
        std::string s = good;
        s[8] = 4;
        std::istringstream in(s);
        try {
            io::read_spkt(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 8);
        }
    }
    {
        std::istringstream in(good.substr(0, good.size() - 3));
        try {
            io::read_spkt(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == good.size() - 3);
        }
    }
    {
        std::istringstream in(good + "x");
        CHECK_THROWS_AS(io::read_spkt(in), FormatError);
    }
    {
        std::string s = good;
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(s.data() + 41 + 4, &nan, 4);
        std::istringstream in(s);
        try {
            io::read_spkt(in);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 45);
        }
    }
}

TEST_CASE("SPKT writer rejects a mismatched k_max") {
    io::TrajectoryFile f = sample_file();
    f.k_max = {1.0};
    std::ostringstream out;
    CHECK_THROWS_AS(io::write_spkt(out, f), InputError);
}

TEST_CASE("CSV export and import") {
    io::TrajectoryFile f = sample_file(3);
    std::ostringstream out;
    io::write_csv(out, f.pattern);
    const std::string text = out.str();
    CHECK(text.rfind("shot,sample,kx,ky,kz\n", 0) == 0);
    std::istringstream in(text);
    const SamplingPattern k = io::read_csv(in);
    CHECK(k.shots == 3);
    CHECK(k.samples == 5);
    // 9 significant digits reproduce a float exactly.
    for (std::size_t i = 0; i < k.coords.size(); ++i) CHECK(static_cast<float>(k.coords[i]) == static_cast<float>(f.pattern.coords[i]));

    std::ostringstream small;
    SamplingPattern one(1, 1, 2);
    one.coords = {0.123456789012, -1.0};
    io::write_csv(small, one);
    CHECK(small.str() == "shot,sample,kx,ky\n0,0,0.123456789,-1\n");
}

TEST_CASE("CSV errors") {
    auto fails_at = [](const std::string& text, std::uint64_t offset) {
        std::istringstream in(text);
        try {
            io::read_csv(in);
        } catch (const FormatError& e) {
            CHECK(e.offset() == offset);
            return;
        }
        FAIL("expected FormatError");
    };
    fails_at("x,y\n", 0);
    fails_at("shot,sample,kx,ky\n0,0,0.1\n", 18);
    fails_at("shot,sample,kx,ky\n0,0,0.1,abc\n", 18);
    fails_at("shot,sample,kx,ky\n0,0,0,0\n0,2,0,0\n", 26);
    fails_at("shot,sample,kx,ky\n0,0,0,0\n0,1,0,0\n1,0,0,0\n", 42);
    fails_at("shot,sample,kx,ky\n", 18);
}

TEST_CASE("SPKD round trip and validation") {
    TargetDensity rho = discretize(DensityParams{}, 4, 2);
    std::ostringstream out(std::ios::binary);
    io::write_spkd(out, rho);
    const std::string s = out.str();
    REQUIRE(s.size() == 4 + 1 + 4 + 81 * 8);
    CHECK(s.substr(0, 4) == "SPKD");
    CHECK(read_le<std::uint32_t>(s, 5) == 9);
    std::istringstream in(s);
    const TargetDensity back = io::read_spkd(in);
    CHECK(back.grid_n == 4);
    CHECK(oracle::max_abs_diff(back.grid, rho.grid) <= 1e-16);

    std::string bad = s;
    const double neg = -1.0;
    std::memcpy(bad.data() + 9 + 8 * 3, &neg, 8);
    std::istringstream bin(bad);
    try {
        io::read_spkd(bin);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 9 + 8 * 3);
    }
    std::string even = s;
    even[5] = 8;
    std::istringstream ein(even);
    CHECK_THROWS_AS(io::read_spkd(ein), FormatError);
}
