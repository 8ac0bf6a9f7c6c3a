// world_io.cpp — line-delimited UTF-8 dataset persistence ("ppcworld-v1").
//
// One SceneSpec per line; integer arrays as bracketed lists; rasters are
// regenerated from specs on load rather than stored.

#include "ppc/world.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ppc::world {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    if (v == std::floor(v) && std::abs(v) < 1e15) {  // clean integer joints
        std::snprintf(buf, sizeof buf, "%.0f", v);
        return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // trim to the shortest round-tripping form
    double probe;
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &probe);
        if (probe == v) return shorter;
    }
    return buf;
}

template <typename It>
std::string bracketed(It begin, It end) {
    std::string s = "[";
    for (It it = begin; it != end; ++it) {
        if (it != begin) s += ",";
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(*it)>>)
            s += fmt_double(*it);
        else
            s += std::to_string(*it);
    }
    return s + "]";
}

struct Cursor {
    const std::string& s;
    size_t pos = 0;
    int line_no;

    [[noreturn]] void die(const std::string& msg) const {
        fail("parse-error", "line " + std::to_string(line_no) + ": " + msg);
    }
    void skip_ws() {
        while (pos < s.size() && s[pos] == ' ') ++pos;
    }
    bool done() {
        skip_ws();
        return pos >= s.size();
    }
    // reads "key=" and returns key
    std::string key() {
        skip_ws();
        size_t eq = s.find('=', pos);
        if (eq == std::string::npos) die("expected key=value");
        std::string k = s.substr(pos, eq - pos);
        pos = eq + 1;
        return k;
    }
    std::string scalar() {
        size_t start = pos;
        while (pos < s.size() && s[pos] != ' ') ++pos;
        return s.substr(start, pos - start);
    }
    std::string delimited(char open, char close) {
        if (pos >= s.size() || s[pos] != open) die(std::string("expected '") + open + "'");
        size_t end = s.find(close, pos + 1);
        if (end == std::string::npos) die(std::string("missing '") + close + "'");
        std::string inner = s.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        return inner;
    }
    std::vector<double> number_list() {
        std::vector<double> out;
        std::string inner = delimited('[', ']');
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                die("bad number '" + item + "'");
            }
        }
        return out;
    }
};

std::vector<int> to_ints(const std::vector<double>& v) {
    std::vector<int> out;
    out.reserve(v.size());
    for (double d : v) out.push_back(static_cast<int>(d));
    return out;
}

}  // namespace

std::string scene_to_line(const SceneSpec& spec) {
    std::string s = "scene seed=" + std::to_string(spec.seed) +
                    " canvas=" + std::to_string(spec.canvas_w) + "x" +
                    std::to_string(spec.canvas_h) + " patch=" + std::to_string(spec.patch) +
                    " global=" + bracketed(spec.global_tokens.begin(), spec.global_tokens.end());
    for (const auto& p : spec.people) {
        std::vector<double> joints;
        for (int j = 0; j < kJoints; ++j) {
            joints.push_back(p.skeleton.joints(j, 0));
            joints.push_back(p.skeleton.joints(j, 1));
        }
        std::vector<int> box = {p.box.x0, p.box.y0, p.box.x1, p.box.y1};
        s += " person={index=" + std::to_string(p.index) + " color=" + std::to_string(p.color_id) +
             " action=" + std::to_string(p.action_id) + " box=" +
             bracketed(box.begin(), box.end()) + " joints=" +
             bracketed(joints.begin(), joints.end()) + " desc=" +
             bracketed(p.desc_tokens.begin(), p.desc_tokens.end()) + "}";
    }
    return s;
}

namespace {
SceneSpec scene_from_line_impl(const std::string& line, int line_no);
}

SceneSpec scene_from_line(const std::string& line, int line_no) {
    try {
        return scene_from_line_impl(line, line_no);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {  // stoi/stoull garbage input
        fail("parse-error",
             "line " + std::to_string(line_no) + ": malformed number (" + e.what() + ")");
    }
}

namespace {

SceneSpec scene_from_line_impl(const std::string& line, int line_no) {
    Cursor c{line, 0, line_no};
    c.skip_ws();
    if (line.compare(c.pos, 6, "scene ") != 0) c.die("expected 'scene' record");
    c.pos += 6;

    SceneSpec spec;
    while (!c.done()) {
        std::string k = c.key();
        if (k == "seed") {
            spec.seed = std::stoull(c.scalar());
        } else if (k == "canvas") {
            std::string v = c.scalar();
            size_t x = v.find('x');
            if (x == std::string::npos) c.die("canvas must be WxH");
            spec.canvas_w = std::stoi(v.substr(0, x));
            spec.canvas_h = std::stoi(v.substr(x + 1));
        } else if (k == "patch") {
            spec.patch = std::stoi(c.scalar());
        } else if (k == "global") {
            spec.global_tokens = to_ints(c.number_list());
        } else if (k == "person") {
            std::string inner = c.delimited('{', '}');
            Cursor pc{inner, 0, line_no};
            PersonSpec p;
            while (!pc.done()) {
                std::string pk = pc.key();
                if (pk == "index")
                    p.index = std::stoi(pc.scalar());
                else if (pk == "color")
                    p.color_id = std::stoi(pc.scalar());
                else if (pk == "action")
                    p.action_id = std::stoi(pc.scalar());
                else if (pk == "box") {
                    auto b = to_ints(pc.number_list());
                    if (b.size() != 4) pc.die("box needs 4 entries");
                    p.box = {b[0], b[1], b[2], b[3]};
                } else if (pk == "joints") {
                    auto j = pc.number_list();
                    if (j.size() != kJoints * 2) pc.die("joints needs 10 entries");
                    for (int q = 0; q < kJoints; ++q)
                        p.skeleton.joints.row(q) << j[2 * q], j[2 * q + 1];
                } else if (pk == "desc") {
                    p.desc_tokens = to_ints(pc.number_list());
                } else {
                    pc.die("unknown person field '" + pk + "'");
                }
            }
            spec.people.push_back(std::move(p));
        } else {
            c.die("unknown scene field '" + k + "'");
        }
    }
    if (spec.canvas_w <= 0 || spec.canvas_h <= 0) c.die("missing canvas");
    return spec;
}

}  // namespace

void save_scenes(const std::string& path, const std::vector<SceneSpec>& scenes) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "io-error", "cannot open for write: " + path);
    f << kDatasetHeader << "\n";
    for (const auto& s : scenes) f << scene_to_line(s) << "\n";
    require(f.good(), "io-error", "write failed: " + path);
}

std::vector<SceneSpec> load_scenes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "io-error", "cannot open for read: " + path);
    std::string line;
    require(static_cast<bool>(std::getline(f, line)), "bad-header", "empty dataset file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == kDatasetHeader, "bad-header",
            "expected '" + std::string(kDatasetHeader) + "', got '" + line + "'");
    std::vector<SceneSpec> scenes;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        scenes.push_back(scene_from_line(line, line_no));
    }
    return scenes;
}

}  // namespace ppc::world
