// Python bindings for the main operations: model building and forwards,
// parameter accounting, gradient checking, the downstream adapters, the
// synthetic task generators, and full experiment runs.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sen/adapters.hpp"
#include "sen/runner.hpp"
#include "sen/tasks.hpp"
#include "sen/training.hpp"

namespace py = pybind11;
using namespace sen;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const Array& arr) {
  Shape shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape.push_back(int64_t(arr.shape(i)));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

// Experiment wrapper exposing forwards on numpy inputs.
class PySen {
 public:
  explicit PySen(const std::string& config_json)
      : cfg_(SENConfig::from_json_text(config_json)),
        sen_(cfg_.build_spec(), cfg_.seed) {}

  py::dict forward(const std::vector<Array>& inputs) {
    if (int64_t(inputs.size()) != sen_.modalities())
      throw ShapeError("forward: expected " +
                       std::to_string(sen_.modalities()) +
                       " modality arrays, got " +
                       std::to_string(inputs.size()));
    // each input: [batch, seq_len, input_dim]
    int64_t batch = -1;
    std::vector<Tensor> flat;
    for (int64_t m = 0; m < sen_.modalities(); ++m) {
      const Array& a = inputs[size_t(m)];
      const EncoderConfig& e = sen_.neuron(m).config();
      if (a.ndim() != 3 || a.shape(1) != e.seq_len ||
          a.shape(2) != e.input_dim)
        throw ShapeError("forward: modality " + std::to_string(m) +
                         " must be [batch, " + std::to_string(e.seq_len) +
                         ", " + std::to_string(e.input_dim) + "]");
      if (batch < 0) batch = int64_t(a.shape(0));
      if (int64_t(a.shape(0)) != batch)
        throw ShapeError("forward: inconsistent batch extents");
      std::vector<double> data(a.data(), a.data() + a.size());
      flat.push_back(Tensor::from_data({batch * e.seq_len, e.input_dim},
                                       std::move(data)));
    }
    SEN::ForwardResult res = sen_.forward(flat, batch);
    py::list finals;
    for (const Tensor& f : res.finals) finals.append(array_from_tensor(f));
    py::dict out;
    out["finals"] = finals;
    out["context"] = array_from_tensor(res.context);
    return out;
  }

  py::dict count_parameters() const {
    auto [frozen, trainable] = sen_.count_parameters();
    py::dict out;
    out["frozen"] = frozen;
    out["trainable"] = trainable;
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> names;
    for (const auto& [name, tensor] : sen_.named_trainables())
      names.push_back(name);
    return names;
  }

  std::string encoders_sha256() const { return sen_.encoders_sha256(); }
  int64_t rounds() const { return sen_.rounds(); }
  int64_t modalities() const { return sen_.modalities(); }
  int64_t shared_dim() const { return sen_.shared_dim(); }

 private:
  SENConfig cfg_;
  SEN sen_;
};

py::dict run_gradcheck(const std::string& config_json) {
  SENConfig cfg = SENConfig::from_json_text(config_json);
  GradCheckResult r = sen_gradcheck(cfg);
  py::dict out;
  out["max_rel_err"] = r.max_rel_err;
  out["entries_checked"] = r.entries_checked;
  return out;
}

py::dict run_experiment(const std::string& config_json,
                        const std::string& metrics_path) {
  SENConfig cfg = SENConfig::from_json_text(config_json);
  Experiment exp(cfg);
  TrainOutcome outcome;
  if (metrics_path.empty()) {
    outcome = exp.run(nullptr);
  } else {
    MetricsWriter writer(metrics_path);
    outcome = exp.run(&writer);
  }
  py::list rows;
  for (const auto& r : outcome.metrics) {
    py::dict row;
    row["step"] = r.step;
    row["arm"] = r.arm;
    row["metric"] = r.metric;
    row["value"] = r.value;
    row["seed"] = r.seed;
    rows.append(row);
  }
  py::dict out;
  out["metrics"] = rows;
  out["final_metric"] = outcome.final_metric;
  out["steps_run"] = outcome.steps_run;
  out["encoder_hash"] = outcome.encoder_hash_after;
  return out;
}

py::tuple predict(const Array& video, const Array& audio,
                  const Array& class_matrix) {
  auto classes = ClassEmbeddings::normalized(tensor_from_array(class_matrix),
                                             {});
  Prediction p = contrastive_predict(tensor_from_array(video),
                                     tensor_from_array(audio), classes);
  py::array_t<double> scores(py::ssize_t(p.scores.size()));
  std::copy(p.scores.begin(), p.scores.end(), scores.mutable_data());
  return py::make_tuple(p.class_index, scores);
}

py::array_t<double> inject(const Array& context,
                           const std::vector<int64_t>& target_shape) {
  Tensor out = context_inject(tensor_from_array(context),
                              Shape(target_shape.begin(), target_shape.end()));
  return array_from_tensor(out);
}

py::array_t<double> average(const std::vector<Array>& finals) {
  std::vector<Tensor> tensors;
  tensors.reserve(finals.size());
  for (const Array& a : finals) tensors.push_back(tensor_from_array(a));
  return array_from_tensor(average_features(tensors));
}

py::dict parity_task(int64_t modalities, int64_t input_dim, int64_t seq_len,
                     double noise, int64_t train_samples, int64_t test_samples,
                     uint64_t seed) {
  ParityTaskSpec spec;
  spec.modalities = modalities;
  spec.input_dim = input_dim;
  spec.seq_len = seq_len;
  spec.noise = noise;
  spec.train_samples = train_samples;
  spec.test_samples = test_samples;
  TaskData data = gen_parity_task(spec, seed);
  auto stack = [&](const std::vector<Tensor>& inputs, int64_t n) {
    py::list out;
    for (const Tensor& t : inputs) {
      py::array_t<double> a({n, seq_len, input_dim});
      std::copy(t.values().begin(), t.values().end(), a.mutable_data());
      out.append(a);
    }
    return out;
  };
  py::dict out;
  out["train_inputs"] = stack(data.train_inputs, train_samples);
  out["test_inputs"] = stack(data.test_inputs, test_samples);
  out["train_labels"] = data.train_labels;
  out["test_labels"] = data.test_labels;
  out["sha256"] = data.sha256();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Recursive multi-modal encoder network (C++ core)";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  py::class_<PySen>(m, "Sen",
                    "Frozen multi-modal encoders with the trainable "
                    "recursive-association state of the configured arm")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def("forward", &PySen::forward, py::arg("inputs"),
           "Run the configured arm on [batch, seq_len, input_dim] arrays; "
           "returns per-modality finals and their context mean")
      .def("count_parameters", &PySen::count_parameters)
      .def("trainable_names", &PySen::trainable_names)
      .def("encoders_sha256", &PySen::encoders_sha256)
      .def_property_readonly("rounds", &PySen::rounds)
      .def_property_readonly("modalities", &PySen::modalities)
      .def_property_readonly("shared_dim", &PySen::shared_dim);

  m.def("default_config", [] { return SENConfig().to_json_text(); },
        "Desk-scale default experiment config as canonical JSON");
  m.def("config_digest",
        [](const std::string& text) {
          return SENConfig::from_json_text(text).digest();
        },
        py::arg("config_json"));
  m.def("gradcheck", &run_gradcheck, py::arg("config_json"),
        "Central-difference check over the configured arm's trainables");
  m.def("run_experiment", &run_experiment, py::arg("config_json"),
        py::arg("metrics_path") = std::string(),
        "Train per the config; returns metrics rows and the final metric");
  m.def("contrastive_predict", &predict, py::arg("video"), py::arg("audio"),
        py::arg("class_matrix"),
        "Summed cosine similarity argmax, ties toward the lowest index");
  m.def("context_inject", &inject, py::arg("context"),
        py::arg("target_shape"),
        "Linear resample of a context vector onto a target shape");
  m.def("average_features", &average, py::arg("finals"));
  m.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("base_lr"),
        py::arg("total_steps"));
  m.def("gen_parity_task", &parity_task, py::arg("modalities") = 3,
        py::arg("input_dim") = 8, py::arg("seq_len") = 8,
        py::arg("noise") = 0.1, py::arg("train_samples") = 256,
        py::arg("test_samples") = 64, py::arg("seed") = 1);
}
