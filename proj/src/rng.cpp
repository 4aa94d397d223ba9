#include "era/rng.hpp"

#include <cmath>

namespace era::rng {

double Stream::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u must stay away from 0 for the log.
    double u = 0.0;
    do {
        u = next_unit();
    } while (u <= 0.0);
    double v = next_unit();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 2.0 * M_PI * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::vector<size_t> permutation(size_t n, Stream& stream) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    stream.shuffle(idx);
    return idx;
}

std::vector<size_t> sample_without_replacement(size_t n, size_t k, Stream& stream) {
    if (k > n) k = n;
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    // Partial Fisher-Yates: draw position i from [i, n).
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(stream.next_below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace era::rng
