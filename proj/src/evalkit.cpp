#include "ppc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ppc::evalkit {

AlignmentReport alignment_metrics(const std::vector<world::SceneSpec>& specs,
                                  const std::vector<std::vector<GenResult>>& results) {
    require(specs.size() == results.size(), "shape-mismatch",
            "one result set per spec required");
    AlignmentReport rep;
    for (size_t i = 0; i < specs.size(); ++i) {
        require(!results[i].empty(), "insufficient-samples",
                "spec " + std::to_string(i) + " has no samples");
        SpecAlignment sa;
        for (const auto& gen : results[i]) {
            world::OracleReport oc = world::oracle_check(specs[i], gen.image, gen.pose);
            const double n = static_cast<double>(oc.people.size());
            double color = 0, action = 0;
            for (const auto& pc : oc.people) {
                color += pc.color_correct ? 1.0 : 0.0;
                action += pc.action_correct ? 1.0 : 0.0;
            }
            sa.count_accuracy += oc.count_correct ? 1.0 : 0.0;
            sa.color_binding_accuracy += n > 0 ? color / n : 0.0;
            sa.action_binding_accuracy += n > 0 ? action / n : 0.0;
            sa.all_correct_rate += oc.all_correct ? 1.0 : 0.0;
            ++sa.samples;
        }
        const double k = static_cast<double>(sa.samples);
        sa.count_accuracy /= k;
        sa.color_binding_accuracy /= k;
        sa.action_binding_accuracy /= k;
        sa.all_correct_rate /= k;
        rep.count_accuracy += sa.count_accuracy * k;
        rep.color_binding_accuracy += sa.color_binding_accuracy * k;
        rep.action_binding_accuracy += sa.action_binding_accuracy * k;
        rep.all_correct_rate += sa.all_correct_rate * k;
        rep.samples += sa.samples;
        rep.per_spec.push_back(sa);
    }
    const double total = static_cast<double>(rep.samples);
    rep.count_accuracy /= total;
    rep.color_binding_accuracy /= total;
    rep.action_binding_accuracy /= total;
    rep.all_correct_rate /= total;
    return rep;
}

Rasterd center_pad(const Rasterd& r, int H, int W) {
    require(H >= r.h && W >= r.w, "shape-mismatch", "pad target smaller than raster");
    if (H == r.h && W == r.w) return r;
    Rasterd out(r.channels, H, W);  // constant -1 fill
    const int oy = (H - r.h) / 2, ox = (W - r.w) / 2;
    for (int c = 0; c < r.channels; ++c)
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) out.at(c, oy + y, ox + x) = r.at(c, y, x);
    return out;
}

double patch_cosine_distance(const Rasterd& a, const Rasterd& b, int patch) {
    require(a.same_shape(b), "shape-mismatch", "patch distance needs equal shapes");
    require(patch >= 1 && a.h % patch == 0 && a.w % patch == 0, "shape-mismatch",
            "raster not divisible by patch");
    const int gh = a.h / patch, gw = a.w / patch;
    const int dim = a.channels * patch * patch;
    double sum = 0.0;
    Vecd va(dim), vb(dim);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            int k = 0;
            for (int c = 0; c < a.channels; ++c)
                for (int dy = 0; dy < patch; ++dy)
                    for (int dx = 0; dx < patch; ++dx, ++k) {
                        va(k) = a.at(c, gy * patch + dy, gx * patch + dx);
                        vb(k) = b.at(c, gy * patch + dy, gx * patch + dx);
                    }
            const double na = va.norm(), nb = vb.norm();
            double cosv;
            if (va.cwiseEqual(vb).all())
                cosv = 1.0;  // equal patches (incl. two empty ones) are distance 0 exactly
            else if (na < 1e-12 || nb < 1e-12)
                cosv = 0.0;
            else  // clamped: rounding must not push the distance negative
                cosv = std::min(1.0, std::max(-1.0, va.dot(vb) / (na * nb)));
            sum += 1.0 - cosv;
        }
    return sum / (static_cast<double>(gh) * gw);
}

double pixel_rms(const Rasterd& a, const Rasterd& b) {
    require(a.same_shape(b), "shape-mismatch", "pixel distance needs equal shapes");
    return std::sqrt((a.data - b.data).squaredNorm() /
                     static_cast<double>(a.data.size()));
}

double normalized_entropy(const std::vector<int>& values, int categories) {
    require(categories >= 1, "bad-config", "category count must be positive");
    if (values.empty() || categories == 1) return 0.0;
    std::map<int, int> hist;
    for (int v : values) ++hist[v];
    double h = 0.0;
    const double n = static_cast<double>(values.size());
    for (const auto& [v, c] : hist) {
        const double p = c / n;
        h -= p * std::log(p);
    }
    const double norm = std::log(static_cast<double>(categories));
    return std::min(1.0, std::max(0.0, h / norm));
}

namespace {

// Realized attributes of one generation for one person slot: color from the
// dominant palette color in the box, action from the decoded skeleton whose
// head falls inside the box (-1 when absent/ambiguous).
struct SlotAttributes {
    int color = -1;
    int action = -1;
};

SlotAttributes decode_slot(const world::SceneSpec& spec, const GenResult& gen, size_t slot,
                           const world::DecodeResult& decoded, std::vector<bool>& claimed) {
    SlotAttributes out;
    const world::Box& box = spec.people[slot].box;
    out.color = world::dominant_box_color(gen.image, box, spec.patch, world::kPaletteMax);
    const double cx = (box.x0 + box.x1) * 0.5 * spec.patch;
    const double cy = (box.y0 + box.y1) * 0.5 * spec.patch;
    int best = -1;
    double best_d = 0;
    for (size_t s = 0; s < decoded.skeletons.size(); ++s) {
        if (claimed[s]) continue;
        const auto& head = decoded.skeletons[s].skeleton.joints.row(world::kHead);
        if (!box.contains_pixel(head(0), head(1), spec.patch)) continue;
        const double d = (head(0) - cx) * (head(0) - cx) + (head(1) - cy) * (head(1) - cy);
        if (best < 0 || d < best_d) {
            best = static_cast<int>(s);
            best_d = d;
        }
    }
    if (best >= 0) {
        claimed[static_cast<size_t>(best)] = true;
        out.action = world::nearest_action(decoded.skeletons[static_cast<size_t>(best)].skeleton);
    }
    return out;
}

}  // namespace

DiversityReport diversity_metrics(const std::vector<world::SceneSpec>& specs,
                                  const std::vector<std::vector<GenResult>>& results,
                                  const DiversityConfig& cfg) {
    require(specs.size() == results.size(), "shape-mismatch",
            "one result set per spec required");
    require(!specs.empty(), "insufficient-samples", "no specs to evaluate");
    DiversityReport rep;
    double feat_sum = 0, pix_sum = 0, ent_sum = 0;
    int ent_series = 0;
    for (size_t i = 0; i < specs.size(); ++i) {
        const auto& set = results[i];
        require(set.size() >= 2, "insufficient-samples",
                "diversity needs k >= 2 samples per spec");
        // pad to a per-set common size, rounded up to a patch multiple
        int H = 0, W = 0;
        for (const auto& g : set) {
            H = std::max(H, g.image.h);
            W = std::max(W, g.image.w);
        }
        H = (H + cfg.patch - 1) / cfg.patch * cfg.patch;
        W = (W + cfg.patch - 1) / cfg.patch * cfg.patch;
        std::vector<Rasterd> padded;
        for (const auto& g : set) padded.push_back(center_pad(g.image, H, W));

        double feat = 0, pix = 0;
        int pairs = 0;
        for (size_t a = 0; a < padded.size(); ++a)
            for (size_t b = a + 1; b < padded.size(); ++b) {
                feat += patch_cosine_distance(padded[a], padded[b], cfg.patch);
                pix += pixel_rms(padded[a], padded[b]);
                ++pairs;
            }
        feat_sum += feat / pairs;
        pix_sum += pix / pairs;

        // attribute entropy over the k realizations per person slot
        const size_t n_slots = specs[i].people.size();
        std::vector<std::vector<int>> colors(n_slots), actions(n_slots);
        for (const auto& g : set) {
            world::DecodeResult decoded = world::decode_pose(g.pose);
            std::vector<bool> claimed(decoded.skeletons.size(), false);
            for (size_t slot = 0; slot < n_slots; ++slot) {
                SlotAttributes at = decode_slot(specs[i], g, slot, decoded, claimed);
                colors[slot].push_back(at.color);
                actions[slot].push_back(at.action);
            }
        }
        for (size_t slot = 0; slot < n_slots; ++slot) {
            ent_sum += normalized_entropy(colors[slot], cfg.palette_size);
            ent_sum += normalized_entropy(actions[slot], cfg.action_count);
            ent_series += 2;
        }
        ++rep.sets;
    }
    rep.feature_distance = feat_sum / rep.sets;
    rep.pixel_distance = pix_sum / rep.sets;
    rep.attribute_entropy = ent_series ? ent_sum / ent_series : 0.0;
    return rep;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "io-error", "cannot open report " + path);
    f << "scope,index,count_accuracy,color_binding_accuracy,action_binding_accuracy,"
         "all_correct_rate,feature_distance,pixel_distance,attribute_entropy\n";
    const auto& a = report.alignment;
    const auto& d = report.diversity;
    f << "aggregate,-1," << a.count_accuracy << "," << a.color_binding_accuracy << ","
      << a.action_binding_accuracy << "," << a.all_correct_rate << "," << d.feature_distance
      << "," << d.pixel_distance << "," << d.attribute_entropy << "\n";
    for (size_t i = 0; i < a.per_spec.size(); ++i) {
        const auto& s = a.per_spec[i];
        f << "spec," << i << "," << s.count_accuracy << "," << s.color_binding_accuracy << ","
          << s.action_binding_accuracy << "," << s.all_correct_rate << ",,,\n";
    }
    require(f.good(), "io-error", "report write failed");
}

std::string report_summary(const EvalReport& report) {
    std::ostringstream os;
    const auto& a = report.alignment;
    const auto& d = report.diversity;
    os << "alignment over " << a.samples << " samples / " << a.per_spec.size() << " specs\n";
    os << "  count_accuracy          " << a.count_accuracy << "\n";
    os << "  color_binding_accuracy  " << a.color_binding_accuracy << "\n";
    os << "  action_binding_accuracy " << a.action_binding_accuracy << "\n";
    os << "  all_correct_rate        " << a.all_correct_rate << "\n";
    os << "diversity over " << d.sets << " sets\n";
    os << "  feature_distance        " << d.feature_distance << "\n";
    os << "  pixel_distance          " << d.pixel_distance << "\n";
    os << "  attribute_entropy       " << d.attribute_entropy << "\n";
    return os.str();
}

}  // namespace ppc::evalkit
