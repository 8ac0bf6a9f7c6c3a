// seq.cpp — role-aware 3-axis position assignment.

#include "ppc/seq.hpp"

namespace ppc::seq {

namespace {

// tau for a grid cell: latest box (person order) containing it, else 0
int cell_tau(const std::vector<world::Box>& boxes, int n_boxes, int x, int y) {
    int tau = 0;
    for (int i = 0; i < n_boxes; ++i)
        if (boxes[i].contains_cell(x, y)) tau = i + 1;  // later boxes overwrite
    return tau;
}

}  // namespace

std::vector<PositionId> assign_positions(const PositionLayout& layout) {
    require(layout.text_len >= 0 && layout.grid_w > 0 && layout.grid_h > 0, "bad-config",
            "layout needs a grid");
    require(layout.ctx_people <= static_cast<int>(layout.boxes.size()), "bad-config",
            "ctx_people exceeds box count");

    // validate text spans: inside the segment, pairwise disjoint
    std::vector<int> owner(layout.text_len, 0);
    for (size_t i = 0; i < layout.text_spans.size(); ++i) {
        auto [a, b] = layout.text_spans[i];
        require(a >= 0 && b >= a && b <= layout.text_len, "bad-config",
                "text span out of range");
        for (int t = a; t < b; ++t) {
            if (owner[t] != 0)
                fail("span-conflict", "text token " + std::to_string(t) +
                                          " claimed by persons " + std::to_string(owner[t]) +
                                          " and " + std::to_string(i + 1));
            owner[t] = static_cast<int>(i) + 1;
        }
    }

    std::vector<PositionId> pos;
    pos.reserve(layout.text_len +
                (layout.has_ctx ? 3 : 2) * static_cast<size_t>(layout.grid_w) * layout.grid_h);

    for (int t = 0; t < layout.text_len; ++t)
        pos.push_back({layout.text_tau_zero ? 0 : owner[t], 0, 0});

    auto push_grid = [&](int n_boxes) {
        for (int y = 0; y < layout.grid_h; ++y)
            for (int x = 0; x < layout.grid_w; ++x)
                pos.push_back({cell_tau(layout.boxes, n_boxes, x, y), x, y});
    };
    if (layout.has_ctx) push_grid(layout.ctx_people);          // persons 1..i-1
    push_grid(static_cast<int>(layout.boxes.size()));          // pose: persons 1..i
    push_grid(static_cast<int>(layout.boxes.size()));          // image: persons 1..i
    return pos;
}

}  // namespace ppc::seq
