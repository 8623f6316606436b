#include "olm/rng.hpp"

#include "olm/errors.hpp"

#include <cmath>

namespace olm {

std::int64_t Rng::poisson(double lambda) {
    if (lambda < 0 || !std::isfinite(lambda)) {
        throw ValidationError("poisson rate must be finite and non-negative");
    }
    if (lambda == 0) return 0;
    // Work in chunks so the product never underflows for larger rates.
    std::int64_t k = 0;
    double remaining = lambda;
    while (remaining > 0) {
        double step = remaining > 500.0 ? 500.0 : remaining;
        double limit = std::exp(-step);
        double p = 1.0;
        for (;;) {
            p *= unit();
            if (p <= limit) break;
            ++k;
        }
        remaining -= step;
    }
    return k;
}

} // namespace olm
