// world.cpp — scene generation, rendering, decoding, oracle.

#include "ppc/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <set>

namespace ppc::world {

namespace {

// Hand states: Up = y-3, Down = y+3 (x is -3 for left, +3 for right).
// Feet states: Stand = (-2,3),(2,3); Flip = (-1,-3),(1,-3).
// Eight templates = {UU, UD, DU, DD} x {Stand, Flip}. Min pairwise joint-L2
// distance is 6.0 px, which keeps nearest-template classification exact under
// the +-1 px per-joint jitter (worst-case decoded deviation 5.66 px).
std::array<Eigen::Matrix<double, kJoints, 2>, kActionCount> make_templates() {
    std::array<Eigen::Matrix<double, kJoints, 2>, kActionCount> out;
    const double hand_y[2] = {-3.0, 3.0};  // up, down
    const double feet[2][4] = {{-2, 3, 2, 3}, {-1, -3, 1, -3}};  // stand, flip
    for (int lh = 0; lh < 2; ++lh)
        for (int rh = 0; rh < 2; ++rh)
            for (int f = 0; f < 2; ++f) {
                int id = (lh * 2 + rh) * 2 + f;
                auto& t = out[id];
                t.setZero();
                t.row(kLHand) << -3.0, hand_y[lh];
                t.row(kRHand) << 3.0, hand_y[rh];
                t.row(kLFoot) << feet[f][0], feet[f][1];
                t.row(kRFoot) << feet[f][2], feet[f][3];
            }
    return out;
}

constexpr int kLimbFrom[kLimbs] = {kHead, kHead, kHead, kHead};
constexpr int kLimbTo[kLimbs] = {kLHand, kRHand, kLFoot, kRFoot};

// stroke presence threshold and the boundary between the two value classes
// sharing channel 0 (1.0 vs 0.6)
constexpr double kStrokeThr = -0.5;
constexpr double kClassBoundary = 0.8;

struct Pix {
    int x, y;
};

double dist2(double ax, double ay, double bx, double by) {
    double dx = ax - bx, dy = ay - by;
    return dx * dx + dy * dy;
}

Box box_from_joints(const Skeleton& skel, int grid_w, int grid_h, int patch) {
    double xmin = skel.joints.col(0).minCoeff();
    double xmax = skel.joints.col(0).maxCoeff();
    double ymin = skel.joints.col(1).minCoeff();
    double ymax = skel.joints.col(1).maxCoeff();
    Box b;
    b.x0 = std::max(0, static_cast<int>(std::floor(xmin / patch)) - 1);
    b.y0 = std::max(0, static_cast<int>(std::floor(ymin / patch)) - 1);
    b.x1 = std::min(grid_w, static_cast<int>(std::floor(xmax / patch)) + 2);
    b.y1 = std::min(grid_h, static_cast<int>(std::floor(ymax / patch)) + 2);
    return b;
}

int coarse_pos_code(const Box& box, int patch, int canvas_w, int canvas_h) {
    double cx = 0.5 * (box.x0 + box.x1) * patch;
    double cy = 0.5 * (box.y0 + box.y1) * patch;
    int gx = std::min(2, static_cast<int>(3.0 * cx / canvas_w));
    int gy = std::min(2, static_cast<int>(3.0 * cy / canvas_h));
    return gy * 3 + gx;
}

std::vector<int> make_desc(int index, int color_id, int action_id, int pos_code) {
    return {kTokPerson,          kTokIndexBase + index, kTokColorBase + color_id,
            kTokActionBase + action_id, kTokPosBase + pos_code, kTokSep};
}

}  // namespace

const std::array<Eigen::Matrix<double, kJoints, 2>, kActionCount>& action_templates() {
    static const auto t = make_templates();
    return t;
}

SceneSpec gen_scene(uint64_t seed, const WorldConfig& cfg) {
    require(cfg.canvas_h >= 16 && cfg.canvas_w >= 16, "bad-config", "canvas must be >= 16x16");
    require(cfg.patch >= 1 && cfg.canvas_h % cfg.patch == 0 && cfg.canvas_w % cfg.patch == 0,
            "bad-config", "canvas must be divisible by patch");
    require(cfg.num_people >= 1 && cfg.num_people <= kMaxPeople, "bad-config",
            "num_people must be in 1..8");
    require(cfg.palette_size >= 2 && cfg.palette_size <= kPaletteMax, "bad-config",
            "palette_size must be in 2..6");

    const int grid_w = cfg.canvas_w / cfg.patch;
    const int grid_h = cfg.canvas_h / cfg.patch;
    const auto& templates = action_templates();
    Rng rng(seed);

    struct Draft {
        int color_id, action_id;
        Box box;
        Skeleton skel;
    };

    std::vector<Draft> placed;
    bool ok = false;
    for (int attempt = 0; attempt < 500 && !ok; ++attempt) {
        placed.clear();
        std::set<std::pair<int, int>> used_pairs;
        bool scene_ok = true;
        for (int p = 0; p < cfg.num_people && scene_ok; ++p) {
            bool person_ok = false;
            for (int t = 0; t < 200 && !person_ok; ++t) {
                Draft d;
                d.action_id = rng.uniform_int(0, kActionCount - 1);
                d.color_id = rng.uniform_int(0, cfg.palette_size - 1);
                if (!cfg.allow_duplicates &&
                    used_pairs.count({d.color_id, d.action_id}))
                    continue;
                // head placement keeps the full template footprint on canvas
                int hx = rng.uniform_int(3, cfg.canvas_w - 4);
                int hy = rng.uniform_int(3, cfg.canvas_h - 4);
                d.skel.joints.row(kHead) << hx, hy;
                for (int j = 1; j < kJoints; ++j) {
                    // +-1 px integer jitter per limb joint, clamped to the
                    // template range so the footprint never grows
                    double ox = templates[d.action_id](j, 0) + rng.uniform_int(-1, 1);
                    double oy = templates[d.action_id](j, 1) + rng.uniform_int(-1, 1);
                    ox = std::clamp(ox, -3.0, 3.0);
                    oy = std::clamp(oy, -3.0, 3.0);
                    d.skel.joints.row(j) << hx + ox, hy + oy;
                }
                d.box = box_from_joints(d.skel, grid_w, grid_h, cfg.patch);
                if (!cfg.allow_overlap) {
                    bool clash = false;
                    for (const auto& q : placed)
                        if (d.box.overlaps(q.box)) clash = true;
                    if (clash) continue;
                }
                used_pairs.insert({d.color_id, d.action_id});
                placed.push_back(d);
                person_ok = true;
            }
            if (!person_ok) scene_ok = false;
        }
        ok = scene_ok;
    }
    if (!ok)
        fail("placement-infeasible",
             "could not place " + std::to_string(cfg.num_people) + " disjoint persons on " +
                 std::to_string(cfg.canvas_w) + "x" + std::to_string(cfg.canvas_h));

    // order by box-center distance to canvas center, ties by placement order
    std::vector<int> order(placed.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    double ccx = cfg.canvas_w / 2.0, ccy = cfg.canvas_h / 2.0;
    auto center_d2 = [&](const Draft& d) {
        return dist2(0.5 * (d.box.x0 + d.box.x1) * cfg.patch,
                     0.5 * (d.box.y0 + d.box.y1) * cfg.patch, ccx, ccy);
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return center_d2(placed[a]) < center_d2(placed[b]);
    });

    SceneSpec spec;
    spec.seed = seed;
    spec.canvas_h = cfg.canvas_h;
    spec.canvas_w = cfg.canvas_w;
    spec.patch = cfg.patch;
    spec.global_tokens = {kTokGlobal, kTokCountBase + cfg.num_people, kTokSep};
    for (size_t i = 0; i < order.size(); ++i) {
        const Draft& d = placed[order[i]];
        PersonSpec person;
        person.index = static_cast<int>(i) + 1;
        person.color_id = d.color_id;
        person.action_id = d.action_id;
        person.box = d.box;
        person.skeleton = d.skel;
        person.desc_tokens = make_desc(person.index, d.color_id, d.action_id,
                                       coarse_pos_code(d.box, cfg.patch, cfg.canvas_w,
                                                       cfg.canvas_h));
        spec.people.push_back(std::move(person));
    }
    return spec;
}

Rasterd render_pose(const std::vector<Skeleton>& skeletons, int canvas_h, int canvas_w) {
    Rasterd r(kPoseChannels, canvas_h, canvas_w, kBackground);
    for (const auto& skel : skeletons) {
        for (int k = 0; k < kLimbs; ++k) {
            const int ch = k % kPoseChannels;
            const double val = kStrokeValue[k];
            double ax = skel.joints(kLimbFrom[k], 0), ay = skel.joints(kLimbFrom[k], 1);
            double bx = skel.joints(kLimbTo[k], 0), by = skel.joints(kLimbTo[k], 1);
            int span = static_cast<int>(
                std::ceil(std::max(std::abs(bx - ax), std::abs(by - ay))));
            int steps = 2 * span + 1;
            for (int s = 0; s < steps; ++s) {
                double t = steps == 1 ? 0.0 : static_cast<double>(s) / (steps - 1);
                int px = static_cast<int>(std::llround(ax + t * (bx - ax)));
                int py = static_cast<int>(std::llround(ay + t * (by - ay)));
                if (px < 0 || px >= canvas_w || py < 0 || py >= canvas_h) continue;
                r.at(ch, py, px) = std::max(r.at(ch, py, px), val);
            }
        }
    }
    return r;
}

namespace {

double point_segment_dist2(double px, double py, double ax, double ay, double bx, double by) {
    double vx = bx - ax, vy = by - ay;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return dist2(px, py, ax + t * vx, ay + t * vy);
}

}  // namespace

Rasterd render_rgb(const SceneSpec& spec) {
    Rasterd r(3, spec.canvas_h, spec.canvas_w, kBackground);
    const double limb_radius = 1.2, head_radius = 1.7;
    for (const auto& person : spec.people) {  // index order: later over-paints
        const double* col = kPalette[person.color_id];
        auto paint = [&](int x, int y) {
            for (int c = 0; c < 3; ++c) r.at(c, y, x) = col[c];
        };
        const auto& J = person.skeleton.joints;
        for (int k = 0; k < kLimbs; ++k) {
            double ax = J(kLimbFrom[k], 0), ay = J(kLimbFrom[k], 1);
            double bx = J(kLimbTo[k], 0), by = J(kLimbTo[k], 1);
            int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - limb_radius)));
            int x1 = std::min(spec.canvas_w - 1,
                              static_cast<int>(std::ceil(std::max(ax, bx) + limb_radius)));
            int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - limb_radius)));
            int y1 = std::min(spec.canvas_h - 1,
                              static_cast<int>(std::ceil(std::max(ay, by) + limb_radius)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if (point_segment_dist2(x, y, ax, ay, bx, by) <= limb_radius * limb_radius)
                        paint(x, y);
        }
        double hx = J(kHead, 0), hy = J(kHead, 1);
        for (int y = std::max(0, static_cast<int>(hy - head_radius));
             y <= std::min(spec.canvas_h - 1, static_cast<int>(hy + head_radius)); ++y)
            for (int x = std::max(0, static_cast<int>(hx - head_radius));
                 x <= std::min(spec.canvas_w - 1, static_cast<int>(hx + head_radius)); ++x)
                if (dist2(x, y, hx, hy) <= head_radius * head_radius) paint(x, y);
    }
    return r;
}

std::vector<StageSample> decompose_stages(const SceneSpec& spec) {
    require(!spec.people.empty(), "bad-config", "scene has no people");
    const int n = spec.num_people();
    std::vector<StageSample> stages;
    std::vector<Skeleton> prefix;
    Rasterd prev = render_pose({}, spec.canvas_h, spec.canvas_w);  // P_0: all background
    for (int i = 1; i <= n; ++i) {
        prefix.push_back(spec.people[i - 1].skeleton);
        StageSample s;
        s.stage = i;
        s.num_stages = n;
        s.global_tokens = spec.global_tokens;
        for (int j = 0; j < i; ++j) {
            const auto& d = spec.people[j].desc_tokens;
            s.text_tokens.insert(s.text_tokens.end(), d.begin(), d.end());
            s.boxes.push_back(spec.people[j].box);
        }
        s.context_pose = prev;
        s.target_pose = render_pose(prefix, spec.canvas_h, spec.canvas_w);
        if (i == n) s.target_image = render_rgb(spec);
        s.canvas_h = spec.canvas_h;
        s.canvas_w = spec.canvas_w;
        s.patch = spec.patch;
        prev = s.target_pose;
        stages.push_back(std::move(s));
    }
    return stages;
}

DecodeResult decode_pose(const Rasterd& pose) {
    require(pose.channels == kPoseChannels, "shape-mismatch", "pose raster must have 3 channels");
    const int h = pose.h, w = pose.w;
    DecodeResult out;

    // stroke mask = any channel above threshold; 8-connected components
    // (diagonal limb strokes touch corner-to-corner)
    std::vector<int> comp(static_cast<size_t>(h) * w, -1);
    auto lit = [&](int x, int y) {
        for (int c = 0; c < kPoseChannels; ++c)
            if (pose.at(c, y, x) > kStrokeThr) return true;
        return false;
    };
    int ncomp = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!lit(x, y) || comp[y * w + x] >= 0) continue;
            std::deque<Pix> q{{x, y}};
            comp[y * w + x] = ncomp;
            while (!q.empty()) {
                Pix p = q.front();
                q.pop_front();
                const int dx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
                const int dy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
                for (int d = 0; d < 8; ++d) {
                    int nx = p.x + dx[d], ny = p.y + dy[d];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    if (!lit(nx, ny) || comp[ny * w + nx] >= 0) continue;
                    comp[ny * w + nx] = ncomp;
                    q.push_back({nx, ny});
                }
            }
            ++ncomp;
        }

    std::vector<std::vector<Pix>> members(ncomp);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (comp[y * w + x] >= 0) members[comp[y * w + x]].push_back({x, y});

    for (const auto& pix : members) {
        // head = pixels lit in all three channels
        std::vector<Pix> head_pix;
        for (const auto& p : pix) {
            bool all = true;
            for (int c = 0; c < kPoseChannels; ++c)
                if (pose.at(c, p.y, p.x) <= kStrokeThr) all = false;
            if (all) head_pix.push_back(p);
        }
        if (pix.size() < 8) {  // too small to be a person: flag, don't guess —
            if (!head_pix.empty())  // unless it is headless dust, which is noise
                ++out.ambiguous_regions;
            continue;
        }
        bool ambiguous = head_pix.empty();
        for (size_t a = 0; a < head_pix.size() && !ambiguous; ++a)
            for (size_t b = a + 1; b < head_pix.size(); ++b)
                if (dist2(head_pix[a].x, head_pix[a].y, head_pix[b].x, head_pix[b].y) > 8.0)
                    ambiguous = true;  // spread head cluster: likely merged persons
        if (ambiguous) {
            ++out.ambiguous_regions;
            continue;
        }
        double hx = 0, hy = 0;
        for (const auto& p : head_pix) {
            hx += p.x;
            hy += p.y;
        }
        hx /= head_pix.size();
        hy /= head_pix.size();

        // limb endpoint = farthest candidate pixel from the head
        auto endpoint = [&](int channel, double lo, double hi, double& ex, double& ey) {
            double best = -1.0;
            bool found = false;
            for (const auto& p : pix) {
                double v = pose.at(channel, p.y, p.x);
                if (v <= lo || v > hi) continue;
                double d = dist2(p.x, p.y, hx, hy);
                if (d > best) {
                    best = d;
                    ex = p.x;
                    ey = p.y;
                    found = true;
                }
            }
            // reject degenerate (head-adjacent) picks and runaway arms; the
            // shortest legitimate limb is a jittered foot at ~2.2 px minus a
            // half-pixel head-centroid shift
            return found && best >= 1.5 && best <= 8.0 * 8.0;
        };

        // full-value classes are open above: overshoot past 1.0 is still
        // unambiguously the top class, only the 0.8 boundary separates the
        // two ch0 classes
        const double inf = std::numeric_limits<double>::infinity();
        Skeleton skel;
        skel.joints.row(kHead) << hx, hy;
        double ex, ey;
        bool okay = true;
        okay &= endpoint(0, kClassBoundary, inf, ex, ey);  // lhand: ch0, full value
        if (okay) skel.joints.row(kLHand) << ex, ey;
        okay = okay && endpoint(1, kStrokeThr, inf, ex, ey);  // rhand: ch1
        if (okay) skel.joints.row(kRHand) << ex, ey;
        okay = okay && endpoint(2, kStrokeThr, inf, ex, ey);  // lfoot: ch2
        if (okay) skel.joints.row(kLFoot) << ex, ey;
        okay = okay && endpoint(0, kStrokeThr, kClassBoundary, ex, ey);  // rfoot: ch0, half value
        if (okay) skel.joints.row(kRFoot) << ex, ey;

        if (!okay) {
            ++out.ambiguous_regions;
            continue;
        }
        out.skeletons.push_back({skel, static_cast<int>(pix.size())});
    }
    return out;
}

int nearest_action(const Skeleton& skel) {
    const auto& templates = action_templates();
    Eigen::Matrix<double, kJoints, 2> rel = skel.joints;
    for (int j = 0; j < kJoints; ++j) rel.row(j) -= skel.joints.row(kHead);
    int best = -1;
    double best_d = 0;
    for (int a = 0; a < kActionCount; ++a) {
        double d = (rel - templates[a]).squaredNorm();
        if (best < 0 || d < best_d) {
            best = a;
            best_d = d;
        }
    }
    return best;
}

int dominant_box_color(const Rasterd& rgb, const Box& box, int patch, int palette_size) {
    require(rgb.channels == 3, "shape-mismatch", "rgb raster must have 3 channels");
    std::vector<int> counts(palette_size, 0);
    for (int y = box.y0 * patch; y < box.y1 * patch && y < rgb.h; ++y)
        for (int x = box.x0 * patch; x < box.x1 * patch && x < rgb.w; ++x) {
            double px[3] = {rgb.at(0, y, x), rgb.at(1, y, x), rgb.at(2, y, x)};
            double bg_d = 0;
            for (int c = 0; c < 3; ++c) bg_d += (px[c] - kBackground) * (px[c] - kBackground);
            int best = -1;
            double best_d = bg_d;  // background competes with the palette
            for (int k = 0; k < palette_size; ++k) {
                double d = 0;
                for (int c = 0; c < 3; ++c) d += (px[c] - kPalette[k][c]) * (px[c] - kPalette[k][c]);
                if (d < best_d) {
                    best = k;
                    best_d = d;
                }
            }
            if (best >= 0) ++counts[best];
        }
    int best = -1, best_n = 0;
    for (int k = 0; k < palette_size; ++k)
        if (counts[k] > best_n) {
            best = k;
            best_n = counts[k];
        }
    return best;
}

OracleReport oracle_check(const SceneSpec& spec, const Rasterd& rgb, const Rasterd& pose) {
    require(rgb.channels == 3 && rgb.h == spec.canvas_h && rgb.w == spec.canvas_w,
            "shape-mismatch", "rgb raster does not match scene canvas");
    require(pose.channels == kPoseChannels && pose.h == spec.canvas_h && pose.w == spec.canvas_w,
            "shape-mismatch", "pose raster does not match scene canvas");

    OracleReport rep;
    DecodeResult dec = decode_pose(pose);
    rep.decoded_count = dec.count();
    rep.count_correct = dec.count() == spec.num_people();

    std::vector<bool> taken(dec.skeletons.size(), false);
    rep.people.resize(spec.people.size());
    for (size_t i = 0; i < spec.people.size(); ++i) {
        const auto& person = spec.people[i];
        PersonCheck& pc = rep.people[i];
        // match: nearest unclaimed decoded skeleton whose head lies in the box
        int match = -1;
        double match_d = 0;
        double bx = 0.5 * (person.box.x0 + person.box.x1) * spec.patch;
        double by = 0.5 * (person.box.y0 + person.box.y1) * spec.patch;
        for (size_t s = 0; s < dec.skeletons.size(); ++s) {
            if (taken[s]) continue;
            const auto& J = dec.skeletons[s].skeleton.joints;
            if (!person.box.contains_pixel(J(kHead, 0), J(kHead, 1), spec.patch)) continue;
            double d = dist2(J(kHead, 0), J(kHead, 1), bx, by);
            if (match < 0 || d < match_d) {
                match = static_cast<int>(s);
                match_d = d;
            }
        }
        if (match >= 0) {
            taken[match] = true;
            const auto& J = dec.skeletons[match].skeleton.joints;
            pc.present = true;
            for (int j = 0; j < kJoints; ++j)
                if (!person.box.contains_pixel(J(j, 0), J(j, 1), spec.patch)) pc.present = false;
            pc.action_correct =
                pc.present && nearest_action(dec.skeletons[match].skeleton) == person.action_id;
        }
        pc.color_correct =
            dominant_box_color(rgb, person.box, spec.patch, kPaletteMax) == person.color_id;
    }

    // undecodable regions fail the strict verdict even when the count matches
    rep.all_correct = rep.count_correct && dec.ambiguous_regions == 0;
    for (const auto& pc : rep.people)
        rep.all_correct = rep.all_correct && pc.present && pc.color_correct && pc.action_correct;
    return rep;
}

}  // namespace ppc::world
