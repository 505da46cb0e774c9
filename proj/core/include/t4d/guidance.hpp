#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "t4d/camera.hpp"
#include "t4d/scene.hpp"
#include "t4d/tape.hpp"

namespace t4d {

// One rendered frame offered for scoring: the [H*W,3] pixel tensor, the
// camera and scene time it was rendered at, and the timeline frame index
// (-1 when the time is off the frame grid).
struct GuidanceQuery {
  const Tensor* rendered = nullptr;
  Camera camera;
  double time = 0.0;
  int frame = -1;
};

struct GuidanceResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d pixel, same shape as the rendered tensor
};

// Contract between the trainer and any score source: per-pixel gradients
// plus a scalar diagnostic loss for one rendered frame. view_free providers
// can score any camera; fixed-target providers require the camera their
// targets were made with.
class GuidanceProvider {
 public:
  virtual ~GuidanceProvider() = default;
  virtual GuidanceResult evaluate(const GuidanceQuery& query) = 0;
  virtual bool view_free() const { return false; }
};

// loss = sum((r-t)^2)/rows, grad = 2(r-t)/rows — exactly the tape's mse
// gradient. Throws Error("guidance.shape") on shape mismatch.
GuidanceResult reconstruction_result(const Tensor& rendered, const Tensor& target);

// Reconstruction against a fixed per-frame target stack; queries must carry
// a valid frame index (Error("guidance.shape") otherwise).
class ReconstructionGuidance : public GuidanceProvider {
 public:
  explicit ReconstructionGuidance(std::vector<Tensor> frames);
  GuidanceResult evaluate(const GuidanceQuery& query) override;

 private:
  std::vector<Tensor> frames_;
};

std::unique_ptr<GuidanceProvider> reconstruction_guidance(const FrameBatch& targets);

// Reconstruction against targets produced on demand by a callback, so the
// trainer may roam cameras and sample times off the frame grid.
class CallbackGuidance : public GuidanceProvider {
 public:
  using TargetFn = std::function<Tensor(const Camera&, double time, int frame)>;
  CallbackGuidance(TargetFn target, bool free_view);
  GuidanceResult evaluate(const GuidanceQuery& query) override;
  bool view_free() const override { return free_view_; }

 private:
  TargetFn target_;
  bool free_view_;
};

// Renders a reference scene at the queried camera/time as the target.
std::unique_ptr<GuidanceProvider> scene_oracle_guidance(SceneAssets reference);

}  // namespace t4d
