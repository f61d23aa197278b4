#pragma once

#include <functional>

namespace aclseg {

// Process-wide worker count used by the heavier kernels. 0 or negative resets to 1.
void set_num_threads(int n);
int num_threads();

// Splits [begin, end) into contiguous chunks, one per worker. Work items must
// write disjoint outputs so the result does not depend on the worker count.
void parallel_for(int begin, int end, const std::function<void(int, int)>& body);

}  // namespace aclseg
