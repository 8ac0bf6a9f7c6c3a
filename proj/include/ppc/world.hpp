#pragma once
// world.hpp — synthetic multi-person scene generator with exact decode/oracle.
//
// A scene holds N stick-figure persons on a small canvas. Each person has a
// color, an action (skeleton template), a box on the patch grid, and a fixed
// length symbolic description. Rendering is deterministic, and decode_pose /
// oracle_check invert it exactly on disjoint-box scenes.

#include "ppc/common.hpp"
#include "ppc/raster.hpp"

#include <array>
#include <optional>
#include <vector>

namespace ppc::world {

// ---- geometry -------------------------------------------------------------

inline constexpr int kJoints = 5;  // head, lhand, rhand, lfoot, rfoot
inline constexpr int kLimbs = 4;   // head->lhand, head->rhand, head->lfoot, head->rfoot
inline constexpr int kPoseChannels = 3;
// limb k draws into channel k % kPoseChannels; limbs 0 and 3 share channel 0
// and are told apart by stroke value class (1.0 vs 0.6), both within (-1, 1].
inline constexpr double kStrokeValue[kLimbs] = {1.0, 1.0, 1.0, 0.6};
inline constexpr double kBackground = -1.0;

// joint order inside a Skeleton
enum Joint { kHead = 0, kLHand = 1, kRHand = 2, kLFoot = 3, kRFoot = 4 };

struct Skeleton {
    // rows: joints, cols: (x, y) in pixel coordinates (continuous; the
    // generator always produces integers so round-trips are exact)
    Eigen::Matrix<double, kJoints, 2> joints;
};

// Integer rectangle on the patch grid, half-open [x0,x1) x [y0,y1).
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool contains_cell(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool overlaps(const Box& o) const {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains_pixel(double px, double py, int patch) const {
        return px >= x0 * patch && px < x1 * patch && py >= y0 * patch && py < y1 * patch;
    }
};

// ---- symbolic vocabulary ----------------------------------------------------
// Fixed token id layout; injective over (index, color, action, coarse position).

inline constexpr int kTokNull = 0;  // learned null token (CFG dropout target)
inline constexpr int kTokPerson = 1;
inline constexpr int kTokGlobal = 2;
inline constexpr int kTokSep = 3;
inline constexpr int kTokCountBase = 4;    // + n, n in 1..8
inline constexpr int kTokColorBase = 12;   // + color_id, 0..5
inline constexpr int kTokActionBase = 20;  // + action_id, 0..7
inline constexpr int kTokPosBase = 28;     // + coarse 3x3 cell, 0..8
inline constexpr int kTokIndexBase = 40;   // + person index, 1..8
inline constexpr int kVocabSize = 64;

inline constexpr int kDescLen = 6;    // per-person description length L
inline constexpr int kGlobalLen = 3;  // [GLOBAL, COUNT_n, SEP]
inline constexpr int kMaxPeople = 8;
inline constexpr int kActionCount = 8;
inline constexpr int kPaletteMax = 6;

// palette colors as RGB triples in [-1, 1]
inline constexpr double kPalette[kPaletteMax][3] = {
    {1, -1, -1},   // red
    {-1, 1, -1},   // green
    {-1, -1, 1},   // blue
    {1, 1, -1},    // yellow
    {1, -1, 1},    // magenta
    {-1, 1, 1},    // cyan
};

// ---- scene types ------------------------------------------------------------

struct WorldConfig {
    int canvas_h = 32;
    int canvas_w = 32;
    int patch = 2;
    int num_people = 1;
    int palette_size = 4;           // <= kPaletteMax
    bool allow_duplicates = false;  // identical (color, action) pairs
    bool allow_overlap = false;     // overlapping boxes
};

struct PersonSpec {
    int index = 0;  // 1-based, assigned after center-distance ordering
    int color_id = 0;
    int action_id = 0;
    Box box;
    Skeleton skeleton;
    std::vector<int> desc_tokens;  // length kDescLen
};

struct SceneSpec {
    uint64_t seed = 0;
    int canvas_h = 0, canvas_w = 0, patch = 2;
    std::vector<int> global_tokens;  // length kGlobalLen
    std::vector<PersonSpec> people;
    int num_people() const { return static_cast<int>(people.size()); }
    int grid_w() const { return canvas_w / patch; }
    int grid_h() const { return canvas_h / patch; }
};

// One supervised example: stage i of a scene with N people.
struct StageSample {
    int stage = 1;       // i, 1-based
    int num_stages = 1;  // N
    std::vector<int> text_tokens;    // c_1 + ... + c_i
    std::vector<int> global_tokens;  // scene summary (pooled conditioning)
    Rasterd context_pose;            // P_{i-1}; all-background when i == 1
    Rasterd target_pose;             // P_i
    std::optional<Rasterd> target_image;  // I, final stage only
    std::vector<Box> boxes;          // boxes of persons 1..i
    int canvas_h = 0, canvas_w = 0, patch = 2;
};

// ---- decode / oracle --------------------------------------------------------

struct DecodedSkeleton {
    Skeleton skeleton;
    // pixel sets kept for diagnostics
    int component_pixels = 0;
};

struct DecodeResult {
    std::vector<DecodedSkeleton> skeletons;
    int ambiguous_regions = 0;  // components flagged instead of guessed
    int count() const { return static_cast<int>(skeletons.size()); }
};

struct PersonCheck {
    bool present = false;
    bool color_correct = false;
    bool action_correct = false;
};

struct OracleReport {
    std::vector<PersonCheck> people;
    int decoded_count = 0;
    bool count_correct = false;
    bool all_correct = false;
};

// ---- ops --------------------------------------------------------------------

// action template joint offsets relative to the head, integers in [-3, 3]
const std::array<Eigen::Matrix<double, kJoints, 2>, kActionCount>& action_templates();

// Deterministic scene generation. Throws Error("placement-infeasible") when
// cfg.num_people disjoint boxes cannot be placed, Error("bad-config") on
// invalid cfg (canvas < 16, people out of 1..8, palette out of 2..6).
SceneSpec gen_scene(uint64_t seed, const WorldConfig& cfg);

// Pose raster: kPoseChannels x H x W, background -1, strokes composed by
// pixel-wise max.
Rasterd render_pose(const std::vector<Skeleton>& skeletons, int canvas_h, int canvas_w);

// RGB raster: 3 x H x W, persons drawn in index order (later over-paints).
Rasterd render_rgb(const SceneSpec& spec);

// N stage samples; stage i carries text c_1..c_i, context P_{i-1}, target P_i,
// and final image at i == N only.
std::vector<StageSample> decompose_stages(const SceneSpec& spec);

// Inverse of render_pose on clean disjoint scenes (joints within 1.5 px;
// exact for generator output). Overlapping/undecodable strokes are flagged
// ambiguous, never guessed.
DecodeResult decode_pose(const Rasterd& pose);

// Alignment oracle: per-person present / color / action plus count.
OracleReport oracle_check(const SceneSpec& spec, const Rasterd& rgb, const Rasterd& pose);

// dominant palette color inside a box (-1 when no stroke pixels); exposed for
// evalkit attribute decoding
int dominant_box_color(const Rasterd& rgb, const Box& box, int patch, int palette_size);

// nearest action template by head-aligned joint L2 (-1 on degenerate input)
int nearest_action(const Skeleton& skel);

// ---- dataset io ---------------------------------------------------------------

inline constexpr const char* kDatasetHeader = "ppcworld-v1";

void save_scenes(const std::string& path, const std::vector<SceneSpec>& scenes);
std::vector<SceneSpec> load_scenes(const std::string& path);

// canonical single-line text form (used for dataset io and byte-equality tests)
std::string scene_to_line(const SceneSpec& spec);
SceneSpec scene_from_line(const std::string& line, int line_no = 0);

}  // namespace ppc::world
