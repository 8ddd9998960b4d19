#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace omd {

struct Segment {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
    bool operator==(const Segment&) const = default;
};

using Layout = std::vector<Segment>;

inline std::size_t layout_size(const Layout& layout) {
    std::size_t n = 0;
    for (const auto& seg : layout) n += seg.size();
    return n;
}

// Flat parameter container with a named-segment layout. Elementwise
// arithmetic requires identical layouts.
struct ParamVector {
    Layout layout;
    std::vector<double> values;

    ParamVector() = default;
    ParamVector(Layout lay, std::vector<double> vals) : layout(std::move(lay)), values(std::move(vals)) {
        if (values.size() != layout_size(layout))
            throw std::invalid_argument("ParamVector: values length does not match layout");
    }

    static ParamVector zeros_like(const ParamVector& other) {
        ParamVector p;
        p.layout = other.layout;
        p.values.assign(other.values.size(), 0.0);
        return p;
    }

    std::size_t size() const { return values.size(); }

    bool same_layout(const ParamVector& other) const { return layout == other.layout; }

    void check_layout(const ParamVector& other) const {
        if (!same_layout(other)) throw std::invalid_argument("ParamVector: layout mismatch");
    }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // offset of a named segment within values
    std::size_t segment_offset(std::size_t index) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < index; ++i) off += layout[i].size();
        return off;
    }

    ParamVector& add_scaled(const ParamVector& other, double scale) {
        check_layout(other);
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * other.values[i];
        return *this;
    }

    ParamVector& scale(double s) {
        for (double& v : values) v *= s;
        return *this;
    }

    double dot(const ParamVector& other) const {
        check_layout(other);
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * other.values[i];
        return s;
    }

    double norm() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s);
    }

    bool operator==(const ParamVector&) const = default;
};

inline ParamVector operator+(ParamVector a, const ParamVector& b) { return a.add_scaled(b, 1.0); }
inline ParamVector operator-(ParamVector a, const ParamVector& b) { return a.add_scaled(b, -1.0); }
inline ParamVector operator*(double s, ParamVector a) { return a.scale(s); }

}  // namespace omd
