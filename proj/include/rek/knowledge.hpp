#pragma once

#include <cstdint>
#include <string>

#include "rek/error.hpp"

namespace rek {

/// Knowledge coefficients weighting each propagation mode.
struct KnowledgeCoefficients {
    /// Upper bound of the impending-blockage band, as a multiple of the diagonal length.
    double c_diag = 0.75;
    /// Coefficient given to the strongest (shortest-path) scatterer reflection.
    double c_ref_init = 5.0;
    /// Step between consecutive reflection coefficients, floored at zero.
    double c_ref_decrement = 0.2;
    double c_ref_g = 0.5;
    double c_df = 1.0;
    double c_block = 1.0;
    /// Seeds the random diffraction/blockage values of impending-blockage links.
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (!(c_diag > 0.5 && c_diag <= 1.5)) throw ValidationError("c_diag must lie in (0.5, 1.5]");
        if (!(c_ref_init > 0.0)) throw ValidationError("c_ref_init must be positive");
        if (!(c_ref_decrement >= 0.0)) throw ValidationError("c_ref_decrement must be non-negative");
    }

    /// Apply a "key=value" override; throws ValidationError on unknown keys.
    void set(const std::string& key, double value) {
        if (key == "c_diag") c_diag = value;
        else if (key == "c_ref_init" || key == "c_ref_i") c_ref_init = value;
        else if (key == "c_ref_decrement") c_ref_decrement = value;
        else if (key == "c_ref_g") c_ref_g = value;
        else if (key == "c_df") c_df = value;
        else if (key == "c_block") c_block = value;
        else if (key == "rng_seed") rng_seed = static_cast<std::uint64_t>(value);
        else throw ValidationError("unknown knowledge coefficient '" + key + "'");
    }
};

}  // namespace rek
