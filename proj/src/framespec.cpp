#include "prefjudge/framespec.hpp"

#include <algorithm>
#include <cmath>

#include "prefjudge/errors.hpp"

namespace prefjudge {

bool FrameSpec::valid() const noexcept {
    if (!(fps >= 0.0) || !std::isfinite(fps)) return false;
    if (dropped) return max_frames == 0;
    return width > 0 && height > 0;
}

PerturbationOp PerturbationOp::frame_reduce(std::uint32_t factor) {
    if (std::find(kFrameReduceFactors.begin(), kFrameReduceFactors.end(), factor) == kFrameReduceFactors.end())
        throw InvalidInput("frame reduction factor must be 2, 4 or 8, got " + std::to_string(factor));
    return {PerturbationKind::FrameReduce, factor};
}

FrameSpec base_spec(double duration_seconds) {
    if (!std::isfinite(duration_seconds) || duration_seconds < 0.0)
        throw InvalidInput("duration must be a finite nonnegative number of seconds");

    if (duration_seconds <= 30.0) {
        const double fps = 2.0;
        // floor: a partial trailing second does not yield an extra frame.
        const auto frames = static_cast<std::uint32_t>(std::floor(duration_seconds * fps));
        return {fps, frames, 512, 512, false};
    }
    if (duration_seconds <= 120.0) return {2.0, 180, 512, 512, false};
    if (duration_seconds <= 240.0) return {2.0, 240, 448, 448, false};
    return {1.0, 240, 448, 448, false};
}

PerturbationOp sample_perturbation(Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t branch = kPerturbationWeights.size() - 1;
    for (std::size_t i = 0; i < kPerturbationWeights.size(); ++i) {
        acc += kPerturbationWeights[i];
        if (u < acc) {
            branch = i;
            break;
        }
    }
    switch (static_cast<PerturbationKind>(branch)) {
        case PerturbationKind::Normal:
            return PerturbationOp::normal();
        case PerturbationKind::FrameReduce:
            return PerturbationOp::frame_reduce(kFrameReduceFactors[uniform_index(rng, kFrameReduceFactors.size())]);
        case PerturbationKind::ResolutionReduce:
            return PerturbationOp::resolution_reduce();
        case PerturbationKind::JointReduce:
            return PerturbationOp::joint_reduce();
        case PerturbationKind::Dropout:
            return PerturbationOp::dropout();
    }
    return PerturbationOp::normal();
}

namespace {

FrameSpec reduce_frames(FrameSpec spec, std::uint32_t factor) {
    spec.max_frames = (spec.max_frames + factor - 1) / factor;
    return spec;
}

FrameSpec reduce_resolution(FrameSpec spec) {
    if (spec.dropped) return spec;
    spec.width = std::max<std::uint32_t>(1, spec.width / 2);
    spec.height = std::max<std::uint32_t>(1, spec.height / 2);
    return spec;
}

}  // namespace

FrameSpec apply_perturbation(const FrameSpec& spec, const PerturbationOp& op) {
    switch (op.kind) {
        case PerturbationKind::Normal:
            return spec;
        case PerturbationKind::FrameReduce:
            return reduce_frames(spec, op.factor);
        case PerturbationKind::ResolutionReduce:
            return reduce_resolution(spec);
        case PerturbationKind::JointReduce:
            return reduce_resolution(reduce_frames(spec, 2));
        case PerturbationKind::Dropout: {
            FrameSpec out = spec;
            out.dropped = true;
            out.max_frames = 0;
            return out;
        }
    }
    return spec;
}

std::string_view to_string(PerturbationKind kind) {
    switch (kind) {
        case PerturbationKind::Normal: return "Normal";
        case PerturbationKind::FrameReduce: return "FrameReduce";
        case PerturbationKind::ResolutionReduce: return "ResolutionReduce";
        case PerturbationKind::JointReduce: return "JointReduce";
        case PerturbationKind::Dropout: return "Dropout";
    }
    return "Normal";
}

PerturbationKind perturbation_kind_from_string(std::string_view name) {
    for (auto k : {PerturbationKind::Normal, PerturbationKind::FrameReduce, PerturbationKind::ResolutionReduce,
                   PerturbationKind::JointReduce, PerturbationKind::Dropout}) {
        if (to_string(k) == name) return k;
    }
    throw InvalidInput("unknown perturbation kind: " + std::string(name));
}

void to_json(nlohmann::json& j, const FrameSpec& spec) {
    j = nlohmann::json{{"fps", spec.fps},
                       {"max_frames", spec.max_frames},
                       {"width", spec.width},
                       {"height", spec.height},
                       {"dropped", spec.dropped}};
}

void from_json(const nlohmann::json& j, FrameSpec& spec) {
    j.at("fps").get_to(spec.fps);
    j.at("max_frames").get_to(spec.max_frames);
    j.at("width").get_to(spec.width);
    j.at("height").get_to(spec.height);
    j.at("dropped").get_to(spec.dropped);
}

void to_json(nlohmann::json& j, const PerturbationOp& op) {
    j = nlohmann::json{{"kind", to_string(op.kind)}};
    if (op.kind == PerturbationKind::FrameReduce) j["factor"] = op.factor;
}

void from_json(const nlohmann::json& j, PerturbationOp& op) {
    op.kind = perturbation_kind_from_string(j.at("kind").get<std::string>());
    op.factor = 0;
    if (op.kind == PerturbationKind::FrameReduce) op = PerturbationOp::frame_reduce(j.at("factor").get<std::uint32_t>());
}

}  // namespace prefjudge
