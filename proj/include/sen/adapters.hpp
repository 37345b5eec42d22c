#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sen/tensor.hpp"

namespace sen {

// One text-derived embedding per class, rows kept at unit L2 norm.
struct ClassEmbeddings {
  Tensor matrix;  // [C, d]
  std::vector<std::string> labels;

  static ClassEmbeddings normalized(Tensor raw,
                                    std::vector<std::string> labels);
  int64_t classes() const { return matrix.dim(0); }
  int64_t dim() const { return matrix.dim(1); }
};

struct Prediction {
  int64_t class_index = 0;
  std::vector<double> scores;
};

// scores[c] = cos(video, class_c) + cos(audio, class_c); argmax with ties
// broken toward the lowest index. Zero-norm features are a numeric error.
Prediction contrastive_predict(const Tensor& video, const Tensor& audio,
                               const ClassEmbeddings& classes);

// Same decision rule over a batch via one similarity-matrix sum;
// videos/audios are [N, d].
std::vector<int64_t> contrastive_predict_batch(const Tensor& videos,
                                               const Tensor& audios,
                                               const ClassEmbeddings& classes);

// Differentiable cosine similarities of row features against the class
// matrix: [B, d] -> [B, C].
Tensor cosine_scores(const Tensor& features, const ClassEmbeddings& classes);

// Resamples a context vector to an arbitrary target shape by 1-D linear
// interpolation over the flattened feature axis, endpoints aligned.
// Differentiable; the caller adds the result to the task-model input.
Tensor context_inject(const Tensor& context, const Shape& target_shape);

// Row-wise variant: every row of x[B, d] is resampled to target_size.
Tensor context_inject_rows(const Tensor& x, int64_t target_size);

// Elementwise mean in fixed modality order.
Tensor average_features(std::span<const Tensor> finals);

}  // namespace sen
