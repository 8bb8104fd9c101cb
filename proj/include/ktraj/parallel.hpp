#pragma once

namespace ktraj {

/// Sets the worker thread count used by all parallel loops (0 = all logical cores).
void set_num_threads(int n);

/// Current worker thread count.
int num_threads();

}  // namespace ktraj
