#pragma once

namespace sckd {

/// Keeps large activation buffers on the heap between batches instead of
/// returning them to the OS after every forward pass. No-op off glibc.
void tune_allocator();

}  // namespace sckd
