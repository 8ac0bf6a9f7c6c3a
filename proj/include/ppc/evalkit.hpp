#pragma once
// evalkit.hpp — alignment metrics (exact oracle) and diversity metrics
// (pairwise patch-cosine, pairwise pixel RMS, normalized attribute entropy).

#include "ppc/common.hpp"
#include "ppc/raster.hpp"
#include "ppc/world.hpp"

#include <string>
#include <vector>

namespace ppc::evalkit {

// One generated sample for a spec: final pose + final image.
struct GenResult {
    Rasterd pose;
    Rasterd image;
};

struct SpecAlignment {
    double count_accuracy = 0;
    double color_binding_accuracy = 0;
    double action_binding_accuracy = 0;
    double all_correct_rate = 0;
    int samples = 0;
};

struct AlignmentReport {
    std::vector<SpecAlignment> per_spec;
    double count_accuracy = 0;
    double color_binding_accuracy = 0;
    double action_binding_accuracy = 0;
    double all_correct_rate = 0;
    int samples = 0;
};

// Oracle-checks every (spec, sample) pair and averages. Binding accuracies
// are per-person fractions; count and all-correct are 0/1 per sample.
AlignmentReport alignment_metrics(const std::vector<world::SceneSpec>& specs,
                                  const std::vector<std::vector<GenResult>>& results);

struct DiversityConfig {
    int patch = 2;          // feature-distance patch size
    int palette_size = 4;   // color categories for entropy normalization
    int action_count = world::kActionCount;
};

struct DiversityReport {
    double feature_distance = 0;   // mean pairwise mean-over-patches (1 - cosine)
    double pixel_distance = 0;     // mean pairwise RMS difference
    double attribute_entropy = 0;  // normalized Shannon entropy, in [0, 1]
    int sets = 0;
};

// k >= 2 generations per spec; images are center-padded to a common per-set
// size (constant -1) before distance computation.
DiversityReport diversity_metrics(const std::vector<world::SceneSpec>& specs,
                                  const std::vector<std::vector<GenResult>>& results,
                                  const DiversityConfig& cfg = {});

struct EvalReport {
    AlignmentReport alignment;
    DiversityReport diversity;
};

void write_report_csv(const EvalReport& report, const std::string& path);
std::string report_summary(const EvalReport& report);

// ---- building blocks (exposed for direct testing) ----

// center-pad to (H, W) with constant -1; exact copy when sizes match
Rasterd center_pad(const Rasterd& r, int H, int W);

// mean over aligned non-overlapping p x p patch vectors of (1 - cosine)
double patch_cosine_distance(const Rasterd& a, const Rasterd& b, int patch);

// sqrt(mean((a - b)^2))
double pixel_rms(const Rasterd& a, const Rasterd& b);

// normalized Shannon entropy of a category histogram: H / log(categories),
// clamped to [0, 1]; zero when fewer than two distinct values occur
double normalized_entropy(const std::vector<int>& values, int categories);

}  // namespace ppc::evalkit
