// Per-loss-term gradient verification of a whole model against central
// differences, with quantizer assignments frozen at the base point so the
// analytic straight-through gradient and the probed function agree.

#pragma once

#include "decodec/codec.hpp"

#include <string>
#include <vector>

namespace decodec {

struct TermCheck {
  std::string term;
  double max_rel_err = 0.0;
  long coords_checked = 0;
  bool pass = false;
};

struct ModelGradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Coordinates where analytic and probe agree below this absolute level are
  // outside the term's support (zero vs. rounding noise) and are not scored.
  double atol = 1e-7;
  std::uint64_t seed = 2024;
};

// Checks L_RST, L_perp, L_SG, mel reconstruction, commitment and codebook
// losses of the given configuration at a seeded random point, sweeping every
// coordinate of the parameters each term depends on.
std::vector<TermCheck> run_model_gradcheck(const ModelConfig& cfg,
                                           const ModelGradCheckOptions& opt = {});

}  // namespace decodec
