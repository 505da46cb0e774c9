#include "t4d/guidance.hpp"

#include <utility>

#include "t4d/error.hpp"
#include "t4d/image.hpp"
#include "t4d/renderer.hpp"

namespace t4d {

GuidanceResult reconstruction_result(const Tensor& rendered, const Tensor& target) {
  if (rendered.rows != target.rows || rendered.cols != target.cols)
    throw Error("guidance.shape", "rendered and target tensors differ in shape");
  if (rendered.rows <= 0) throw Error("guidance.shape", "empty rendered tensor");
  GuidanceResult out;
  out.grad = Tensor(rendered.rows, rendered.cols);
  const double inv = 1.0 / static_cast<double>(rendered.rows);
  for (std::size_t k = 0; k < rendered.size(); ++k) {
    const double d = rendered.v[k] - target.v[k];
    out.loss += d * d * inv;
    out.grad.v[k] = 2.0 * d * inv;
  }
  return out;
}

ReconstructionGuidance::ReconstructionGuidance(std::vector<Tensor> frames)
    : frames_(std::move(frames)) {}

GuidanceResult ReconstructionGuidance::evaluate(const GuidanceQuery& query) {
  if (query.rendered == nullptr) throw Error("guidance.shape", "query carries no rendered tensor");
  if (query.frame < 0 || query.frame >= static_cast<int>(frames_.size()))
    throw Error("guidance.shape", "query frame index outside the target stack");
  return reconstruction_result(*query.rendered, frames_[query.frame]);
}

std::unique_ptr<GuidanceProvider> reconstruction_guidance(const FrameBatch& targets) {
  std::vector<Tensor> frames;
  frames.reserve(targets.frames.size());
  for (const Image& img : targets.frames) frames.push_back(image_to_tensor(img));
  return std::make_unique<ReconstructionGuidance>(std::move(frames));
}

CallbackGuidance::CallbackGuidance(TargetFn target, bool free_view)
    : target_(std::move(target)), free_view_(free_view) {}

GuidanceResult CallbackGuidance::evaluate(const GuidanceQuery& query) {
  if (query.rendered == nullptr) throw Error("guidance.shape", "query carries no rendered tensor");
  return reconstruction_result(*query.rendered, target_(query.camera, query.time, query.frame));
}

std::unique_ptr<GuidanceProvider> scene_oracle_guidance(SceneAssets reference) {
  auto ref = std::make_shared<SceneAssets>(std::move(reference));
  return std::make_unique<CallbackGuidance>(
      [ref](const Camera& cam, double time, int frame) {
        const SceneSnapshot snap = snapshot_at(*ref, time, frame < 0 ? 0 : frame);
        return image_to_tensor(render_frame(snap, cam));
      },
      true);
}

}  // namespace t4d
