#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchsched/detail/rng.hpp"
#include "branchsched/errors.hpp"

namespace branchsched {

// One tracked object: axis-aligned box given by center and size, pixels.
struct TraceObject {
    int id = 0;
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

struct TraceFrame {
    int height = 0;
    int width = 0;
    std::vector<TraceObject> objects;
};

// A synthetic video reduced to what the pipeline models care about:
// per-frame object boxes with stable ids.
struct Trace {
    std::vector<TraceFrame> frames;

    int size() const { return static_cast<int>(frames.size()); }
};

inline void to_json(nlohmann::json& j, const TraceObject& o) {
    j = nlohmann::json{{"id", o.id}, {"cx", o.cx}, {"cy", o.cy}, {"w", o.w}, {"h", o.h}};
}

inline void from_json(const nlohmann::json& j, TraceObject& o) {
    o.id = j.at("id").get<int>();
    o.cx = j.at("cx").get<double>();
    o.cy = j.at("cy").get<double>();
    o.w = j.at("w").get<double>();
    o.h = j.at("h").get<double>();
}

inline void to_json(nlohmann::json& j, const TraceFrame& f) {
    j = nlohmann::json{{"height", f.height}, {"width", f.width}, {"objects", f.objects}};
}

inline void from_json(const nlohmann::json& j, TraceFrame& f) {
    f.height = j.at("height").get<int>();
    f.width = j.at("width").get<int>();
    f.objects = j.at("objects").get<std::vector<TraceObject>>();
}

inline void to_json(nlohmann::json& j, const Trace& t) {
    j = nlohmann::json{{"frames", t.frames}};
}

inline void from_json(const nlohmann::json& j, Trace& t) {
    t.frames = j.at("frames").get<std::vector<TraceFrame>>();
}

// One message per structural violation; empty means valid.
inline std::vector<std::string> validate_trace(const Trace& t) {
    std::vector<std::string> out;
    if (t.frames.empty()) out.push_back("trace has no frames");
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
        const auto& f = t.frames[i];
        if (f.height <= 0 || f.width <= 0)
            out.push_back("frame " + std::to_string(i) + ": non-positive dimensions");
        for (const auto& o : f.objects) {
            if (o.w <= 0.0 || o.h <= 0.0)
                out.push_back("frame " + std::to_string(i) + ": object " + std::to_string(o.id) +
                              " has non-positive box size");
            if (o.cx < 0.0 || o.cx > f.width || o.cy < 0.0 || o.cy > f.height)
                out.push_back("frame " + std::to_string(i) + ": object " + std::to_string(o.id) +
                              " center out of bounds");
        }
    }
    return out;
}

enum class SpeedClass { Slow, Medium, Fast };

inline const char* speed_class_name(SpeedClass s) {
    switch (s) {
        case SpeedClass::Slow: return "slow";
        case SpeedClass::Medium: return "medium";
        case SpeedClass::Fast: return "fast";
    }
    throw ParameterError("speed_class_name: bad enum value");
}

inline SpeedClass speed_class_from_name(const std::string& name) {
    if (name == "slow") return SpeedClass::Slow;
    if (name == "medium") return SpeedClass::Medium;
    if (name == "fast") return SpeedClass::Fast;
    throw ParameterError("unknown speed class '" + name + "'");
}

// Recipe for a synthetic trace. speed_override, when set, pins every
// object's speed to that exact value (px/frame) instead of drawing from the
// class range; 0 gives a perfectly static scene.
struct TraceSpec {
    int n_frames = 0;
    int n_objects = 0;
    SpeedClass speed_class = SpeedClass::Medium;
    std::optional<double> speed_override;
    int width = 1280;
    int height = 720;
    double fps = 30.0;  // metadata only; latencies are modeled, not timed
};

inline void to_json(nlohmann::json& j, const TraceSpec& s) {
    j = nlohmann::json{{"n_frames", s.n_frames},   {"n_objects", s.n_objects},
                       {"speed_class", speed_class_name(s.speed_class)},
                       {"width", s.width},         {"height", s.height},
                       {"fps", s.fps}};
    if (s.speed_override) j["speed_override"] = *s.speed_override;
}

inline void from_json(const nlohmann::json& j, TraceSpec& s) {
    s.n_frames = j.at("n_frames").get<int>();
    s.n_objects = j.at("n_objects").get<int>();
    s.speed_class = speed_class_from_name(j.value("speed_class", "medium"));
    if (j.contains("speed_override")) s.speed_override = j.at("speed_override").get<double>();
    s.width = j.value("width", 1280);
    s.height = j.value("height", 720);
    s.fps = j.value("fps", 30.0);
}

// Deterministic synthetic scene: objects bounce around the frame at a
// class-dependent speed with mild per-frame jitter. Object ids persist for
// the whole trace.
inline Trace generate_trace(const TraceSpec& spec, std::uint64_t seed) {
    if (spec.n_frames < 1) throw ParameterError("generate_trace: n_frames must be >= 1");
    if (spec.n_objects < 0) throw ParameterError("generate_trace: n_objects must be >= 0");
    if (spec.width < 64 || spec.height < 64)
        throw ParameterError("generate_trace: frame must be at least 64x64");
    if (spec.speed_override && *spec.speed_override < 0.0)
        throw ParameterError("generate_trace: speed_override must be >= 0");

    detail::Rng rng(seed);
    struct Body {
        double cx, cy, w, h, vx, vy, speed;
    };
    std::vector<Body> bodies;
    bodies.reserve(spec.n_objects);

    auto speed_range = [&]() -> std::pair<double, double> {
        switch (spec.speed_class) {
            case SpeedClass::Slow: return {0.5, 2.0};
            case SpeedClass::Medium: return {4.0, 8.0};
            case SpeedClass::Fast: return {12.0, 20.0};
        }
        return {4.0, 8.0};
    }();

    for (int i = 0; i < spec.n_objects; ++i) {
        Body b;
        b.w = rng.uniform(40.0, 160.0);
        b.h = rng.uniform(40.0, 160.0);
        b.cx = rng.uniform(b.w / 2, spec.width - b.w / 2);
        b.cy = rng.uniform(b.h / 2, spec.height - b.h / 2);
        b.speed = spec.speed_override ? *spec.speed_override
                                      : rng.uniform(speed_range.first, speed_range.second);
        double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        b.vx = b.speed * std::cos(theta);
        b.vy = b.speed * std::sin(theta);
        bodies.push_back(b);
    }

    Trace trace;
    trace.frames.resize(spec.n_frames);
    for (int f = 0; f < spec.n_frames; ++f) {
        TraceFrame& frame = trace.frames[f];
        frame.width = spec.width;
        frame.height = spec.height;
        frame.objects.reserve(bodies.size());
        for (std::size_t i = 0; i < bodies.size(); ++i) {
            Body& b = bodies[i];
            if (f > 0) {
                // Jitter stays proportional to speed so a static scene is
                // exactly static.
                double jx = 0.1 * b.speed * (2.0 * rng.next_double() - 1.0);
                double jy = 0.1 * b.speed * (2.0 * rng.next_double() - 1.0);
                b.cx += b.vx + jx;
                b.cy += b.vy + jy;
                // Bounce off the walls, keeping the whole box inside.
                double xmin = b.w / 2, xmax = spec.width - b.w / 2;
                double ymin = b.h / 2, ymax = spec.height - b.h / 2;
                if (b.cx < xmin) { b.cx = 2 * xmin - b.cx; b.vx = -b.vx; }
                if (b.cx > xmax) { b.cx = 2 * xmax - b.cx; b.vx = -b.vx; }
                if (b.cy < ymin) { b.cy = 2 * ymin - b.cy; b.vy = -b.vy; }
                if (b.cy > ymax) { b.cy = 2 * ymax - b.cy; b.vy = -b.vy; }
                b.cx = std::clamp(b.cx, xmin, xmax);
                b.cy = std::clamp(b.cy, ymin, ymax);
            }
            frame.objects.push_back(TraceObject{static_cast<int>(i), b.cx, b.cy, b.w, b.h});
        }
    }
    return trace;
}

// Content features visible to the runtime at a given frame. Everything is
// computed from frames at or before `frame`: object count and size come
// from the previous frame (what the pipeline has already seen), movement
// from box-center displacements over the trailing window.
struct ContentFeatures {
    int height = 0;
    int width = 0;
    int n_obj = 0;
    double avg_size = 0.0;   // mean box area, px^2
    double movement = 0.0;   // mean center displacement per step, px
};

inline constexpr int kDefaultMovementWindow = 8;

// Mean center displacement between consecutive frames over the trailing
// window, matched by object id. Objects appearing or disappearing simply
// contribute no pair. Returns the number of matched pairs via n_samples
// when the caller wants to know whether movement was observable at all.
inline double movement_feature(const Trace& trace, int frame, int window,
                               std::size_t* n_samples = nullptr) {
    if (frame < 0 || frame >= trace.size())
        throw ParameterError("movement_feature: frame out of range");
    if (window < 1) throw ParameterError("movement_feature: window must be >= 1");
    double sum = 0.0;
    std::size_t count = 0;
    int first_step = std::max(1, frame - window + 1);
    for (int t = first_step; t <= frame; ++t) {
        const auto& prev = trace.frames[t - 1].objects;
        for (const auto& obj : trace.frames[t].objects) {
            auto it = std::find_if(prev.begin(), prev.end(),
                                   [&](const TraceObject& p) { return p.id == obj.id; });
            if (it == prev.end()) continue;
            sum += std::hypot(obj.cx - it->cx, obj.cy - it->cy);
            ++count;
        }
    }
    if (n_samples) *n_samples = count;
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

inline ContentFeatures extract_features(const Trace& trace, int frame,
                                        int window = kDefaultMovementWindow) {
    if (frame < 0 || frame >= trace.size())
        throw ParameterError("extract_features: frame out of range");
    ContentFeatures f;
    f.height = trace.frames[frame].height;
    f.width = trace.frames[frame].width;
    // Object census uses the most recent already-processed frame; at frame 0
    // the current frame is all we have.
    const auto& census = trace.frames[frame > 0 ? frame - 1 : 0].objects;
    f.n_obj = static_cast<int>(census.size());
    if (!census.empty()) {
        double area = 0.0;
        for (const auto& o : census) area += o.w * o.h;
        f.avg_size = area / static_cast<double>(census.size());
    }
    f.movement = movement_feature(trace, frame, window);
    return f;
}

}  // namespace branchsched
