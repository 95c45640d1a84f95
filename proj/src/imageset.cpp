#include "udap/imageset.hpp"

#include <stdexcept>

namespace udap {

const char* label_str(ImageLabel label) {
  switch (label) {
    case ImageLabel::Clean: return "clean";
    case ImageLabel::AdvEncoder: return "adversarial:encoder";
    case ImageLabel::AdvDenoiser: return "adversarial:denoiser";
    case ImageLabel::AdvHybrid: return "adversarial:hybrid";
    case ImageLabel::Purified: return "purified";
  }
  throw std::invalid_argument("label_str: unknown label");
}

ImageLabel label_from_str(const std::string& s) {
  if (s == "clean") return ImageLabel::Clean;
  if (s == "adversarial:encoder") return ImageLabel::AdvEncoder;
  if (s == "adversarial:denoiser") return ImageLabel::AdvDenoiser;
  if (s == "adversarial:hybrid") return ImageLabel::AdvHybrid;
  if (s == "purified") return ImageLabel::Purified;
  throw std::invalid_argument("imageset: unknown label '" + s + "'");
}

void ImageSet::add(Tensor image, ImageLabel label) {
  if (!images.empty() && image.shape() != images.front().shape()) {
    throw std::invalid_argument("imageset: image shape " +
                                shape_str(image.shape()) +
                                " breaks set uniformity " +
                                shape_str(images.front().shape()));
  }
  images.push_back(std::move(image));
  labels.push_back(label);
}

Shape ImageSet::image_shape() const {
  if (images.empty()) {
    throw std::invalid_argument("imageset: empty set has no shape");
  }
  return images.front().shape();
}

void ImageSet::validate() const {
  if (images.size() != labels.size()) {
    throw std::invalid_argument("imageset: image/label count mismatch");
  }
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != images.front().shape()) {
      throw std::invalid_argument("imageset: non-uniform shapes at index " +
                                  std::to_string(i));
    }
    const auto& v = images[i].values();
    if (v.minCoeff() < 0.0f || v.maxCoeff() > 1.0f) {
      throw std::invalid_argument("imageset: values outside [0,1] at index " +
                                  std::to_string(i));
    }
  }
}

Tensor stack_images(const ImageSet& set, const std::vector<int>& indices) {
  if (indices.empty()) {
    throw std::invalid_argument("stack_images: empty selection");
  }
  const Shape img = set.image_shape();
  Shape out_shape = {static_cast<int>(indices.size())};
  out_shape.insert(out_shape.end(), img.begin(), img.end());
  Tensor out = Tensor::zeros(out_shape);
  const int64_t stride = shape_numel(img);
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= static_cast<int>(set.size())) {
      throw std::out_of_range("stack_images: index " + std::to_string(idx));
    }
    out.values().segment(static_cast<int64_t>(i) * stride, stride) =
        set.images[idx].values();
  }
  return out;
}

Tensor batch_of_one(const Tensor& image) {
  Shape s = {1};
  s.insert(s.end(), image.shape().begin(), image.shape().end());
  Tensor out = Tensor::zeros(s);
  out.values() = image.values();
  return out;
}

}  // namespace udap
