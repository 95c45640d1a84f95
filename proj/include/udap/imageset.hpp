#pragma once

#include <string>
#include <vector>

#include "udap/tensor.hpp"

namespace udap {

enum class ImageLabel { Clean, AdvEncoder, AdvDenoiser, AdvHybrid, Purified };

const char* label_str(ImageLabel label);
ImageLabel label_from_str(const std::string& s);

/// A uniform-shape collection of [C,H,W] images with per-image provenance
/// tags. Values live in [0,1]; validate() enforces both invariants.
struct ImageSet {
  std::vector<Tensor> images;
  std::vector<ImageLabel> labels;
  std::string source;

  size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  void add(Tensor image, ImageLabel label);

  /// Shape shared by all images; rejects an empty set.
  Shape image_shape() const;

  void validate() const;
};

/// Stacks the selected images into one [N,C,H,W] batch tensor.
Tensor stack_images(const ImageSet& set, const std::vector<int>& indices);

/// Convenience: stacks a single [C,H,W] image into [1,C,H,W].
Tensor batch_of_one(const Tensor& image);

}  // namespace udap
