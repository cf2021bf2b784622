#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "hubbind/contrastive.hpp"
#include "hubbind/errors.hpp"
#include "hubbind/experiment.hpp"

namespace py = pybind11;
using namespace hubbind;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  auto view = a.unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j));
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  auto view = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = m(i, j);
  return a;
}

ExperimentConfig config_from(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_experiment(j);
}

ojson checkpoint_context(const ExperimentConfig& c) {
  ojson context;
  context["config"] = experiment_to_json(c);
  context["config_hash"] = config_hash(c);
  context["seed"] = c.seed;
  return context;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hub-anchored contrastive binding on synthetic multimodal worlds";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("desk_config", [] { return experiment_to_json(desk_config()).dump(); });
  m.def("canonical_config", [](const std::string& cfg) { return experiment_to_json(config_from(cfg)).dump(); });
  m.def("config_hash", [](const std::string& cfg) { return config_hash(config_from(cfg)); });

  m.def(
      "make_world",
      [](const std::string& cfg, std::optional<std::uint64_t> seed) {
        const ExperimentConfig c = config_from(cfg);
        return world_to_json(make_world(c.world, seed.value_or(c.seed)));
      },
      py::arg("config"), py::arg("seed") = py::none());

  m.def(
      "info_nce",
      [](const Array& q, const Array& k, double tau, bool symmetric) {
        const Matrix mq = to_matrix(q), mk = to_matrix(k);
        const TemperatureParam t = TemperatureParam::fixed(tau);
        const LossOutput out = symmetric ? symmetric_info_nce(mq, mk, t) : info_nce(mq, mk, t);
        return py::make_tuple(out.loss, to_array(out.grad_q), to_array(out.grad_k));
      },
      py::arg("q"), py::arg("k"), py::arg("tau"), py::arg("symmetric") = false,
      "Loss and gradients for unit-norm rows q, k at a fixed temperature.");

  m.def(
      "train",
      [](const std::string& cfg, std::optional<std::string> checkpoint) {
        const ExperimentConfig c = config_from(cfg);
        TrainResult r;
        {
          py::gil_scoped_release release;
          const WorldSpec world = make_world(c.world, c.seed);
          r = train_run(world, c.archs(world), c.train);
        }
        if (checkpoint) save_checkpoint(r.state, *checkpoint, checkpoint_context(c));
        r.report.set_meta("config_hash", config_hash(c));
        r.report.set_meta("seed", std::to_string(c.seed));
        return r.report.to_json();
      },
      py::arg("config"), py::arg("checkpoint") = py::none());

  m.def(
      "evaluate",
      [](const std::string& cfg, std::optional<std::string> checkpoint) {
        const ExperimentConfig c = config_from(cfg);
        py::gil_scoped_release release;
        const WorldSpec world = make_world(c.world, c.seed);
        const ArchMap archs = c.archs(world);
        const EncoderMap encoders = checkpoint ? load_checkpoint(*checkpoint, archs).encoders
                                               : init_state(world, archs, c.train).encoders;
        return evaluate_experiment(c, world, encoders).to_json();
      },
      py::arg("config"), py::arg("checkpoint") = py::none(),
      "Evaluation report for a checkpoint, or for fresh initial encoders when none is given.");

  m.def(
      "run_experiment",
      [](const std::string& cfg) {
        const ExperimentConfig c = config_from(cfg);
        py::gil_scoped_release release;
        return run_experiment(c).report.to_json();
      },
      py::arg("config"));
}
