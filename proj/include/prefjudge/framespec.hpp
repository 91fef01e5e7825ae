#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "prefjudge/random.hpp"

namespace prefjudge {

// Visual-input sampling contract sent alongside a prompt. Perturbations
// transform this metadata; no pixels are ever touched.
struct FrameSpec {
    double fps = 0.0;
    std::uint32_t max_frames = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    bool dropped = false;

    bool valid() const noexcept;
    friend bool operator==(const FrameSpec&, const FrameSpec&) = default;
};

enum class PerturbationKind : std::uint8_t { Normal, FrameReduce, ResolutionReduce, JointReduce, Dropout };

struct PerturbationOp {
    PerturbationKind kind = PerturbationKind::Normal;
    // Only meaningful for FrameReduce; one of {2, 4, 8}.
    std::uint32_t factor = 0;

    static PerturbationOp normal() { return {}; }
    static PerturbationOp frame_reduce(std::uint32_t factor);
    static PerturbationOp resolution_reduce() { return {PerturbationKind::ResolutionReduce, 0}; }
    static PerturbationOp joint_reduce() { return {PerturbationKind::JointReduce, 0}; }
    static PerturbationOp dropout() { return {PerturbationKind::Dropout, 0}; }

    friend bool operator==(const PerturbationOp&, const PerturbationOp&) = default;
};

// Branch probabilities of the perturbation sampler, in PerturbationKind order.
inline constexpr std::array<double, 5> kPerturbationWeights{0.40, 0.20, 0.20, 0.15, 0.05};
inline constexpr std::array<std::uint32_t, 3> kFrameReduceFactors{2, 4, 8};

// Duration-dependent sampling policy:
//   <= 30s   2.0 fps, 512x512, duration * fps frames
//   <= 120s  2.0 fps, 512x512, up to 180 frames
//   <= 240s  2.0 fps, 448x448, up to 240 frames
//   > 240s   1.0 fps, 448x448, up to 240 frames
// Band boundaries belong to the lower band. Throws InvalidInput for
// negative or non-finite durations.
FrameSpec base_spec(double duration_seconds);

PerturbationOp sample_perturbation(Rng& rng);

FrameSpec apply_perturbation(const FrameSpec& spec, const PerturbationOp& op);

std::string_view to_string(PerturbationKind kind);
PerturbationKind perturbation_kind_from_string(std::string_view name);

void to_json(nlohmann::json& j, const FrameSpec& spec);
void from_json(const nlohmann::json& j, FrameSpec& spec);
void to_json(nlohmann::json& j, const PerturbationOp& op);
void from_json(const nlohmann::json& j, PerturbationOp& op);

}  // namespace prefjudge
