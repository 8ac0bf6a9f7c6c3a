#pragma once
// raster.hpp — dense channel-major raster in [-1, 1].

#include "ppc/common.hpp"

namespace ppc {

// Channels stacked vertically: data is (channels*h) x w, channel c occupies
// rows [c*h, (c+1)*h). Background convention is exactly -1.
template <typename S>
struct Raster {
    int channels = 0, h = 0, w = 0;
    Mat<S> data;

    Raster() = default;
    Raster(int c, int h_, int w_, S fill = S(-1))
        : channels(c), h(h_), w(w_), data(Mat<S>::Constant(c * h_, w_, fill)) {}

    S& at(int c, int y, int x) { return data(c * h + y, x); }
    S at(int c, int y, int x) const { return data(c * h + y, x); }

    auto channel(int c) { return data.block(c * h, 0, h, w); }
    auto channel(int c) const { return data.block(c * h, 0, h, w); }

    bool same_shape(const Raster& o) const {
        return channels == o.channels && h == o.h && w == o.w;
    }

    template <typename T>
    Raster<T> cast() const {
        Raster<T> r;
        r.channels = channels;
        r.h = h;
        r.w = w;
        r.data = data.template cast<T>();
        return r;
    }

    // flattened channel-major, row-major within a channel
    Vec<S> flatten() const {
        Vec<S> v(static_cast<Eigen::Index>(channels) * h * w);
        Eigen::Index k = 0;
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) v(k++) = at(c, y, x);
        return v;
    }

    static Raster from_flat(const Vec<S>& v, int c, int h, int w) {
        require(v.size() == static_cast<Eigen::Index>(c) * h * w, "shape-mismatch",
                "from_flat: element count mismatch");
        Raster r(c, h, w);
        Eigen::Index k = 0;
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) r.at(ch, y, x) = v(k++);
        return r;
    }
};

template <typename S>
bool operator==(const Raster<S>& a, const Raster<S>& b) {
    return a.same_shape(b) && a.data == b.data;
}

using Rasterd = Raster<double>;

}  // namespace ppc
