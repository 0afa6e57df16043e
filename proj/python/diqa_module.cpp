#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>

#include "diqa/checkpoint.hpp"
#include "diqa/cli.hpp"
#include "diqa/errors.hpp"
#include "diqa/evaluate.hpp"
#include "diqa/image_io.hpp"
#include "diqa/metrics.hpp"
#include "diqa/pca.hpp"
#include "diqa/pooling.hpp"
#include "diqa/synthetic.hpp"

namespace py = pybind11;
using namespace diqa;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

ModelConfig make_config(const std::string& task, const std::string& pooling, const std::optional<std::string>& fusion,
                        const std::string& depth) {
  const Task t = parse_task(task);
  if (t == Task::kNoReference) {
    if (fusion) throw ConfigError("fusion applies to FR models only");
    return ModelConfig::no_reference(parse_pooling(pooling), parse_depth(depth));
  }
  return ModelConfig::full_reference(parse_pooling(pooling), parse_fusion(fusion.value_or("concat_diff")),
                                     parse_depth(depth));
}

/// Parameters and network kept together so the network's parameter pointer stays valid.
class Model {
 public:
  Model(ModelConfig config, ParamSet<float> params, TrainingMeta meta = {})
      : config_(config), params_(std::make_unique<ParamSet<float>>(std::move(params))), meta_(meta) {
    network_ = std::make_unique<Network<float>>(config_, *params_);
  }

  static Model create(const std::string& task, const std::string& pooling, const std::optional<std::string>& fusion,
                      const std::string& depth, std::uint64_t seed) {
    ModelConfig config = make_config(task, pooling, fusion, depth);
    Rng rng = make_stream(seed, Stream::kInit);
    return Model(config, init_params<float>(config, rng));
  }

  static Model load(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    return Model(ck.config, std::move(ck.params), ck.meta);
  }

  void save(const std::filesystem::path& path) const {
    Checkpoint ck;
    ck.config = config_;
    ck.params = *params_;
    ck.meta = meta_;
    save_checkpoint(ck, path);
  }

  FloatArray features(const FloatArray& patches) const {
    Tape<float> tape(false);
    return to_array(tape.value(network_->extract_features(tape, tape.constant(to_tensor(patches)))));
  }

  py::dict predict_patches(const FloatArray& distorted, const std::optional<FloatArray>& reference) const {
    Tape<float> tape(false);
    Rng rng(0);
    const Tensor d = to_tensor(distorted);
    std::optional<Tensor> r;
    if (reference) r = to_tensor(*reference);
    PatchForward fwd = network_->forward(tape, d, r ? &*r : nullptr, Mode::kEval, rng);
    py::dict out;
    out["quality"] = to_array(tape.value(fwd.quality));
    if (config_.weighted()) out["weight"] = to_array(tape.value(fwd.weight));
    return out;
  }

  py::dict predict_image(const FloatArray& distorted, const std::optional<FloatArray>& reference,
                         std::int64_t n_patches, const std::string& mode, std::uint64_t seed) const {
    PredictOptions options;
    options.n_patches = n_patches;
    options.mode = parse_patch_mode(mode);
    options.seed = seed;
    const Tensor d = to_tensor(distorted);
    std::optional<Tensor> r;
    if (reference) r = to_tensor(*reference);
    const ImagePrediction p = predict_tensors(d, r ? &*r : nullptr, *network_, options, "image");
    py::dict out;
    out["q_hat"] = p.q_hat;
    out["patch_qualities"] = p.patch_qualities;
    out["weights"] = p.normalized_weights;
    out["stabilized_weights"] = p.stabilized_weights;
    std::vector<std::pair<std::int64_t, std::int64_t>> coords;
    for (const auto& c : p.patch_coords) coords.emplace_back(c.row, c.col);
    out["coords"] = coords;
    return out;
  }

  const ModelConfig& config() const { return config_; }
  std::int64_t num_params() const { return params_->scalar_count(); }
  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (const auto& e : *params_) names.push_back(e.name);
    return names;
  }
  FloatArray param(const std::string& name) const { return to_array(params_->at(name)); }
  void set_param(const std::string& name, const FloatArray& value) {
    Tensor& t = params_->at(name);
    Tensor v = to_tensor(value);
    if (v.shape() != t.shape()) throw DimensionError("shape mismatch for '" + name + "'");
    t = std::move(v);
  }

 private:
  ModelConfig config_;
  std::unique_ptr<ParamSet<float>> params_;
  std::unique_ptr<Network<float>> network_;
  TrainingMeta meta_;
};

}  // namespace

PYBIND11_MODULE(_diqa, m) {
  m.doc() = "DIQaM / WaDIQaM image-quality models";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());

  m.def("count_params",
        [](const std::string& task, const std::string& pooling, const std::optional<std::string>& fusion,
           const std::string& depth) { return count_params(make_config(task, pooling, fusion, depth)); },
        py::arg("task"), py::arg("pooling") = "weighted", py::arg("fusion") = py::none(), py::arg("depth") = "full");

  py::class_<Model>(m, "Model")
      .def(py::init(&Model::create), py::arg("task"), py::arg("pooling") = "weighted",
           py::arg("fusion") = py::none(), py::arg("depth") = "full", py::arg("seed") = 0)
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("name", [](const Model& self) { return self.config().name(); })
      .def_property_readonly("feature_dim", [](const Model& self) { return self.config().feature_dim(); })
      .def_property_readonly("fused_dim", [](const Model& self) { return self.config().fused_dim(); })
      .def_property_readonly("num_params", &Model::num_params)
      .def_property_readonly("param_names", &Model::param_names)
      .def("param", &Model::param, py::arg("name"))
      .def("set_param", &Model::set_param, py::arg("name"), py::arg("value"))
      .def("features", &Model::features, py::arg("patches"), "[N,3,32,32] patches -> [N,D] features")
      .def("predict_patches", &Model::predict_patches, py::arg("distorted"), py::arg("reference") = py::none())
      .def("predict_image", &Model::predict_image, py::arg("distorted"), py::arg("reference") = py::none(),
           py::arg("n_patches") = 32, py::arg("mode") = "random", py::arg("seed") = 0);

  m.def("pool_average", [](const DoubleArray& y) { return pool_average(to_vector(y)); }, py::arg("qualities"));
  m.def(
      "pool_weighted",
      [](const DoubleArray& y, const DoubleArray& a) {
        auto r = pool_weighted(to_vector(y), to_vector(a));
        return py::make_tuple(r.q_hat, r.weights);
      },
      py::arg("qualities"), py::arg("stabilized_weights"));
  m.def("lcc", [](const DoubleArray& x, const DoubleArray& y) { return lcc(to_vector(x), to_vector(y)); });
  m.def("srocc", [](const DoubleArray& x, const DoubleArray& y) { return srocc(to_vector(x), to_vector(y)); });

  m.def(
      "pca_fit",
      [](const DoubleArray& samples, Eigen::Index components) {
        if (samples.ndim() != 2) throw DimensionError("samples must be a 2-D array");
        Eigen::MatrixXd x(samples.shape(0), samples.shape(1));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = samples.at(i, j);
        }
        PcaModel p = pca_fit(x, components);
        return py::make_tuple(std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size()),
                              [&] {
                                DoubleArray c({p.components.rows(), p.components.cols()});
                                for (Eigen::Index i = 0; i < p.components.rows(); ++i) {
                                  for (Eigen::Index j = 0; j < p.components.cols(); ++j) {
                                    c.mutable_at(i, j) = p.components(i, j);
                                  }
                                }
                                return c;
                              }(),
                              std::vector<double>(p.explained_variance.data(),
                                                  p.explained_variance.data() + p.explained_variance.size()));
      },
      py::arg("samples"), py::arg("components") = 0,
      "returns (mean, components as columns, explained variances)");

  m.def("load_image", [](const std::filesystem::path& path) { return to_array(load_image(path)); }, py::arg("path"));
  m.def(
      "synth_corpus",
      [](const std::filesystem::path& dir, std::int64_t images, std::int64_t size, std::uint64_t seed) {
        SyntheticOptions o;
        o.images = images;
        o.height = size;
        o.width = size;
        o.seed = seed;
        return write_synthetic_corpus(dir, o).size();
      },
      py::arg("directory"), py::arg("images") = 8, py::arg("size") = 64, py::arg("seed") = 0);
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "runs a diqa command; returns (exit_code, stdout, stderr)");
}
