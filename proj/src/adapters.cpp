#include "sen/adapters.hpp"

#include <cmath>

namespace sen {

namespace {

double row_norm(const double* v, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

// cosine similarities of one feature vector against unit-norm class rows
void cosines_into(const double* feat, int64_t d, const Tensor& classes,
                  double* out, const char* what) {
  const double norm = row_norm(feat, d);
  if (norm == 0.0)
    throw NumericError(std::string("contrastive_predict: zero-norm ") + what +
                       " feature, cosine undefined");
  const double* cm = classes.values().data();
  const int64_t c = classes.dim(0);
  for (int64_t i = 0; i < c; ++i) {
    double dot = 0.0;
    for (int64_t j = 0; j < d; ++j) dot += feat[j] * cm[i * d + j];
    out[i] = dot / norm;
  }
}

int64_t argmax_lowest(const double* scores, int64_t n) {
  int64_t best = 0;
  for (int64_t i = 1; i < n; ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace

ClassEmbeddings ClassEmbeddings::normalized(Tensor raw,
                                            std::vector<std::string> labels) {
  if (!raw.defined() || raw.rank() != 2)
    throw ShapeError("class embeddings must be [C, d]");
  const int64_t c = raw.dim(0), d = raw.dim(1);
  if (!labels.empty() && int64_t(labels.size()) != c)
    throw ShapeError("class embeddings: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(c) + " classes");
  std::vector<double> data(raw.values().begin(), raw.values().end());
  for (int64_t i = 0; i < c; ++i) {
    const double norm = row_norm(data.data() + i * d, d);
    if (norm == 0.0)
      throw NumericError("class embeddings: zero-norm row " +
                         std::to_string(i));
    for (int64_t j = 0; j < d; ++j) data[size_t(i * d + j)] /= norm;
  }
  ClassEmbeddings out;
  out.matrix = Tensor::from_data({c, d}, std::move(data), false);
  out.labels = std::move(labels);
  return out;
}

Prediction contrastive_predict(const Tensor& video, const Tensor& audio,
                               const ClassEmbeddings& classes) {
  const int64_t d = classes.dim();
  if (!video.defined() || !audio.defined() || video.numel() != d ||
      audio.numel() != d)
    throw ShapeError("contrastive_predict: feature widths must equal class "
                     "dim " +
                     std::to_string(d));
  const int64_t c = classes.classes();
  Prediction p;
  p.scores.assign(static_cast<size_t>(c), 0.0);
  std::vector<double> tmp(static_cast<size_t>(c));
  cosines_into(video.values().data(), d, classes.matrix, p.scores.data(),
               "video");
  cosines_into(audio.values().data(), d, classes.matrix, tmp.data(), "audio");
  for (int64_t i = 0; i < c; ++i) p.scores[size_t(i)] += tmp[size_t(i)];
  p.class_index = argmax_lowest(p.scores.data(), c);
  return p;
}

std::vector<int64_t> contrastive_predict_batch(const Tensor& videos,
                                               const Tensor& audios,
                                               const ClassEmbeddings& classes) {
  if (!videos.defined() || !audios.defined() || videos.rank() != 2 ||
      audios.rank() != 2 || videos.shape() != audios.shape() ||
      videos.dim(1) != classes.dim())
    throw ShapeError("contrastive_predict_batch: features must be [N, d] with "
                     "d matching the class matrix");
  const int64_t n = videos.dim(0), d = videos.dim(1), c = classes.classes();
  // full (video + audio) x class similarity-matrix sum, then row argmax
  std::vector<double> sim(static_cast<size_t>(n * c));
  std::vector<double> tmp(static_cast<size_t>(c));
  const double* vv = videos.values().data();
  const double* av = audios.values().data();
  for (int64_t i = 0; i < n; ++i) {
    cosines_into(vv + i * d, d, classes.matrix, sim.data() + i * c, "video");
    cosines_into(av + i * d, d, classes.matrix, tmp.data(), "audio");
    for (int64_t j = 0; j < c; ++j) sim[size_t(i * c + j)] += tmp[size_t(j)];
  }
  std::vector<int64_t> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    out[size_t(i)] = argmax_lowest(sim.data() + i * c, c);
  return out;
}

Tensor cosine_scores(const Tensor& features, const ClassEmbeddings& classes) {
  if (!features.defined() || features.rank() != 2 ||
      features.dim(1) != classes.dim())
    throw ShapeError("cosine_scores: features must be [B, d] with d matching "
                     "the class matrix");
  const double* fv = features.values().data();
  const int64_t b = features.dim(0), d = features.dim(1);
  for (int64_t i = 0; i < b; ++i)
    if (row_norm(fv + i * d, d) == 0.0)
      throw NumericError("cosine_scores: zero-norm feature row " +
                         std::to_string(i));
  Tensor sq_norm = reduce_sum(mul(features, features), 1);  // [B]
  Tensor normed = row_scale(features, rsqrt(sq_norm));
  return matmul_nt(normed, classes.matrix);  // [B, C]
}

Tensor context_inject(const Tensor& context, const Shape& target_shape) {
  if (!context.defined() || context.numel() < 1)
    throw ShapeError("context_inject: undefined context");
  if (target_shape.empty())
    throw ShapeError("context_inject: empty target shape");
  for (int64_t e : target_shape)
    if (e <= 0)
      throw ShapeError("context_inject: non-positive extent in target shape " +
                       shape_str(target_shape));
  const int64_t d = context.numel();
  const int64_t size = shape_numel(target_shape);

  // Sample positions j*(d-1)/(size-1) over the flattened context; endpoints
  // map exactly onto the first and last entries.
  struct Tap {
    int64_t lo, hi;
    double w_hi;
  };
  std::vector<Tap> taps(static_cast<size_t>(size));
  for (int64_t j = 0; j < size; ++j) {
    double pos = 0.0;
    if (size > 1 && d > 1)
      pos = double(j) * double(d - 1) / double(size - 1);
    const int64_t lo = int64_t(std::floor(pos));
    const int64_t hi = std::min<int64_t>(lo + 1, d - 1);
    taps[size_t(j)] = {lo, hi, pos - double(lo)};
  }

  const double* cv = context.values().data();
  std::vector<double> out(static_cast<size_t>(size));
  for (int64_t j = 0; j < size; ++j) {
    const Tap& t = taps[size_t(j)];
    out[size_t(j)] = cv[t.lo] * (1.0 - t.w_hi) + cv[t.hi] * t.w_hi;
  }
  return custom_unary_op(
      context, target_shape, std::move(out),
      [taps = std::move(taps)](std::span<const double> g,
                               std::span<double> gx) {
        for (size_t j = 0; j < taps.size(); ++j) {
          const Tap& t = taps[j];
          gx[size_t(t.lo)] += g[j] * (1.0 - t.w_hi);
          gx[size_t(t.hi)] += g[j] * t.w_hi;
        }
      });
}

Tensor context_inject_rows(const Tensor& x, int64_t target_size) {
  if (!x.defined() || x.rank() != 2)
    throw ShapeError("context_inject_rows: input must be [B, d]");
  if (target_size < 1)
    throw ShapeError("context_inject_rows: target size must be >= 1");
  const int64_t b = x.dim(0), d = x.dim(1);
  struct Tap {
    int64_t lo, hi;
    double w_hi;
  };
  std::vector<Tap> taps(static_cast<size_t>(target_size));
  for (int64_t j = 0; j < target_size; ++j) {
    double pos = 0.0;
    if (target_size > 1 && d > 1)
      pos = double(j) * double(d - 1) / double(target_size - 1);
    const int64_t lo = int64_t(std::floor(pos));
    const int64_t hi = std::min<int64_t>(lo + 1, d - 1);
    taps[size_t(j)] = {lo, hi, pos - double(lo)};
  }
  const double* xv = x.values().data();
  std::vector<double> out(static_cast<size_t>(b * target_size));
  for (int64_t r = 0; r < b; ++r)
    for (int64_t j = 0; j < target_size; ++j) {
      const Tap& t = taps[size_t(j)];
      out[size_t(r * target_size + j)] =
          xv[r * d + t.lo] * (1.0 - t.w_hi) + xv[r * d + t.hi] * t.w_hi;
    }
  return custom_unary_op(
      x, {b, target_size}, std::move(out),
      [taps = std::move(taps), b, d, target_size](std::span<const double> g,
                                                  std::span<double> gx) {
        for (int64_t r = 0; r < b; ++r)
          for (int64_t j = 0; j < target_size; ++j) {
            const Tap& t = taps[size_t(j)];
            const double gv = g[size_t(r * target_size + j)];
            gx[size_t(r * d + t.lo)] += gv * (1.0 - t.w_hi);
            gx[size_t(r * d + t.hi)] += gv * t.w_hi;
          }
      });
}

Tensor average_features(std::span<const Tensor> finals) {
  if (finals.empty()) throw ShapeError("average_features: empty feature list");
  const Shape& base = finals[0].shape();
  for (const Tensor& f : finals) {
    if (!f.defined() || f.shape() != base)
      throw ShapeError("average_features: width mismatch " + shape_str(base) +
                       " vs " +
                       (f.defined() ? shape_str(f.shape()) : "<undefined>"));
  }
  Tensor acc = finals[0];
  for (size_t i = 1; i < finals.size(); ++i) acc = add(acc, finals[i]);
  return divide(acc, double(finals.size()));
}

}  // namespace sen
