#include "gvae/data.hpp"
#include "gvae/error.hpp"
#include "gvae/evaluation.hpp"
#include "gvae/geometry.hpp"
#include "gvae/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

namespace py = pybind11;
using namespace gvae;

namespace {

py::tuple jet_tuple(const Jet& j) { return py::make_tuple(j.value, j.jacobian, j.hessian); }

Jet make_jet(const Vector& value, const Matrix& jacobian, const Matrix& hessian) {
  if (jacobian.rows() != value.size() || hessian.rows() != value.size() ||
      hessian.cols() != jacobian.cols() * jacobian.cols())
    throw ShapeError("jet arrays must be N, N x m and N x m*m");
  return Jet{value, jacobian, hessian};
}

py::dict geometry_dict(const GeometryAtPoint& g) {
  py::dict d;
  d["metric"] = g.metric;
  d["metric_inverse"] = g.metric_inverse;
  d["christoffel"] = g.christoffel;
  d["pe"] = g.pe_curvature;
  d["ex"] = g.ex_curvature;
  d["jitter"] = g.jitter_used;
  return d;
}

py::dict metrics_dict(const EpochMetrics& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["recon"] = e.recon;
  d["kl"] = e.kl;
  d["pe_mean"] = e.pe_mean;
  d["ex_mean"] = e.ex_mean;
  d["pe_max_sqrt"] = e.pe_max_sqrt;
  d["ex_max_sqrt"] = e.ex_max_sqrt;
  d["loss"] = e.loss;
  return d;
}

Embedding bare_embedding(const Matrix& points) {
  Embedding e;
  e.points = points;
  for (Eigen::Index i = 0; i < points.rows(); ++i) e.sample_ids.push_back(std::to_string(i));
  return e;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Curvature-regularized VAE core";

  auto base = py::register_exception<Error>(m, "GammaVaeError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DivergedTrainingError>(m, "DivergedTrainingError", base.ptr());
  py::register_exception<SingularGeometryError>(m, "SingularGeometryError", base.ptr());

  m.attr("DEFAULT_JITTER_SCALE") = kDefaultJitterScale;

  py::class_<VaeModel>(m, "Model")
      .def_static("from_json", [](const std::string& s) { return checkpoint_from_json(nlohmann::json::parse(s)); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def("to_json", [](const VaeModel& v) { return checkpoint_to_json(v).dump(); })
      .def("save", [](const VaeModel& v, const std::string& path) { save_checkpoint(v, path); })
      .def_property_readonly("latent_dim", [](const VaeModel& v) { return v.latent_dim; })
      .def_property_readonly("data_dim", &VaeModel::data_dim)
      .def("encode", [](const VaeModel& v, const Matrix& x) { return encode_means(v, x); }, py::arg("x"))
      .def(
          "decode",
          [](const VaeModel& v, const Matrix& z) {
            if (z.cols() != v.latent_dim) throw ShapeError("decode: z must have latent_dim columns");
            Matrix out(z.rows(), v.data_dim());
            for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = forward(v.decoder, z.row(i).transpose()).transpose();
            return out;
          },
          py::arg("z"))
      .def("jet", [](const VaeModel& v, const Vector& z) { return jet_tuple(decoder_jet(v.decoder, z)); }, py::arg("z"))
      .def(
          "geometry",
          [](const VaeModel& v, const Vector& z, double jitter) {
            return geometry_dict(geometry_at(decoder_jet(v.decoder, z), jitter));
          },
          py::arg("z"), py::arg("jitter_scale") = kDefaultJitterScale)
      .def(
          "tangent_angles",
          [](const VaeModel& v, const Vector& a, const Vector& b) {
            return tangent_angles(decoder_jet(v.decoder, a), decoder_jet(v.decoder, b));
          },
          py::arg("a"), py::arg("b"))
      .def(
          "decode_grid",
          [](const VaeModel& v, const Vector& lo, const Vector& hi, int resolution) {
            const DecodedGrid g = decode_grid(v.decoder, lo, hi, resolution);
            return py::make_tuple(g.latent, g.decoded);
          },
          py::arg("lo"), py::arg("hi"), py::arg("resolution"))
      .def(
          "decode_path",
          [](const VaeModel& v, const Vector& a, const Vector& b, int steps) { return decode_path(v.decoder, a, b, steps); },
          py::arg("z_start"), py::arg("z_end"), py::arg("steps"));

  m.def(
      "train",
      [](const Matrix& data, const std::string& config_json, const std::optional<std::function<void(py::dict)>>& cb) {
        const TrainingConfig cfg = nlohmann::json::parse(config_json).get<TrainingConfig>();
        EpochCallback on_epoch;
        if (cb)
          on_epoch = [&cb](const EpochMetrics& e) {
            py::gil_scoped_acquire gil;
            (*cb)(metrics_dict(e));
          };
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(data, cfg, on_epoch);
        }
        py::list log;
        for (const auto& e : r.log) log.append(metrics_dict(e));
        return py::make_tuple(r.model, log);
      },
      py::arg("data"), py::arg("config_json") = "{}", py::arg("on_epoch") = py::none());

  m.def("resolved_config", [](const std::string& config_json) {
    return nlohmann::json(nlohmann::json::parse(config_json).get<TrainingConfig>()).dump();
  });

  m.def(
      "analytic_jet",
      [](const std::string& kind, const Vector& z, double radius) {
        if (kind == "polar") return jet_tuple(analytic_jet(PolarSheet{}, z));
        if (kind == "sphere") return jet_tuple(analytic_jet(SphereManifold{radius}, z));
        throw DomainError("analytic_jet: kind must be 'polar' or 'sphere'");
      },
      py::arg("kind"), py::arg("z"), py::arg("radius") = 1.0);

  m.def(
      "geometry",
      [](const Vector& value, const Matrix& jacobian, const Matrix& hessian, double jitter) {
        return geometry_dict(geometry_at(make_jet(value, jacobian, hessian), jitter));
      },
      py::arg("value"), py::arg("jacobian"), py::arg("hessian"), py::arg("jitter_scale") = kDefaultJitterScale);

  m.def(
      "gen_synthetic",
      [](const std::string& kind, int n, int ambient_dim, int latent_dim, int clusters, double radius,
         double curvature, double spread, double ring, double scale, double noise_sigma, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.kind = parse_synthetic_kind(kind);
        spec.n = n;
        spec.ambient_dim = ambient_dim;
        spec.latent_dim = latent_dim;
        spec.clusters = clusters;
        spec.radius = radius;
        spec.curvature = curvature;
        spec.spread = spread;
        spec.ring = ring;
        spec.scale = scale;
        spec.noise_sigma = noise_sigma;
        spec.seed = seed;
        const SyntheticData s = gen_synthetic(spec);
        py::dict d;
        d["x"] = s.data.matrix;
        d["latent"] = s.latent;
        d["labels"] = s.data.labels ? py::cast(*s.data.labels) : py::none();
        d["groups"] = s.data.groups ? py::cast(*s.data.groups) : py::none();
        return d;
      },
      py::arg("kind"), py::arg("n") = 1000, py::arg("ambient_dim") = 50, py::arg("latent_dim") = 2,
      py::arg("clusters") = 6, py::arg("radius") = 1.0, py::arg("curvature") = 0.5, py::arg("spread") = 0.35,
      py::arg("ring") = 2.0, py::arg("scale") = 1.0, py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);

  m.def("pairwise_distances", &pairwise_distances, py::arg("points"));
  m.def("spearman", &spearman, py::arg("a"), py::arg("b"));
  m.def(
      "ood_consistency",
      [](const Matrix& full, const Matrix& holdout, const std::vector<bool>& held_out) {
        if (static_cast<Eigen::Index>(held_out.size()) != full.rows())
          throw ShapeError("ood_consistency: mask length must equal the number of rows");
        const std::vector<char> mask(held_out.begin(), held_out.end());
        return ood_consistency(bare_embedding(full), bare_embedding(holdout), mask).rho;
      },
      py::arg("full"), py::arg("holdout"), py::arg("held_out"));

  m.def(
      "pca",
      [](const Matrix& x, int k) {
        const PcaModel p = pca_fit(x, k);
        return py::make_tuple(p.mean, p.components, p.explained_variance, pca_project(p, x));
      },
      py::arg("x"), py::arg("k"));

  m.def(
      "lda_fit_predict",
      [](const Matrix& train_x, const std::vector<std::string>& train_y, const Matrix& test_x, double jitter) {
        return lda_predict(lda_fit(train_x, train_y, jitter), test_x);
      },
      py::arg("train_x"), py::arg("train_y"), py::arg("test_x"), py::arg("jitter_scale") = kDefaultJitterScale);
}
