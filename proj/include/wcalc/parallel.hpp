#pragma once
#include <cstddef>
#include <exception>

namespace wcalc {

// OpenMP loop over [0, n) that carries the first exception out of the
// parallel region instead of terminating.
template <class F>
void parallel_for(std::size_t n, F&& body) {
    std::exception_ptr err;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(wcalc_parallel_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace wcalc
