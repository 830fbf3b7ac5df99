#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "funcarea/errors.hpp"
#include "funcarea/training.hpp"

namespace py = pybind11;
using namespace funcarea;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) float array in [0,1].
Image to_image(const FloatArray& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw InvalidInput("image array must be HxW or HxWxC");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    return Image(w, h, c, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Image& img) {
    FloatArray out({img.height(), img.width(), img.channels()});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

py::tuple box_tuple(const BoundingBox& b) { return py::make_tuple(b.x_min, b.y_min, b.x_max, b.y_max); }

BoundingBox to_box(const py::sequence& s) {
    if (py::len(s) != 4) throw InvalidInput("box must have 4 integers");
    return {s[0].cast<int>(), s[1].cast<int>(), s[2].cast<int>(), s[3].cast<int>()};
}

py::dict detection_dict(const Detection& d) {
    py::dict out;
    out["box"] = box_tuple(d.box);
    out["category"] = category_name(d.category);
    out["category_id"] = d.category;
    out["confidence"] = d.confidence;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Functional area detection: segmentation, proposals, CNN classification and evaluation";

    auto& base = py::register_exception<Error>(m, "Error");
    py::register_exception<FormatError>(m, "FormatError", base.ptr());

    m.def("read_pnm", [](const std::filesystem::path& p) { return to_array(read_pnm(p)); }, py::arg("path"),
          "Read a PPM/PGM as an HxWxC float32 array.");
    m.def("write_pnm", [](const std::filesystem::path& p, const FloatArray& a) { write_pnm(p, to_image(a)); },
          py::arg("path"), py::arg("image"));

    m.def("iou", [](const py::sequence& a, const py::sequence& b) { return iou(to_box(a), to_box(b)); });

    m.def(
        "oversegment",
        [](const FloatArray& a, double k, std::size_t min_size, double sigma) {
            const SegmentMap s = oversegment(to_image(a), {k, min_size, sigma});
            py::array_t<int> labels({s.height, s.width});
            std::copy(s.labels.begin(), s.labels.end(), labels.mutable_data());
            return labels;
        },
        py::arg("image"), py::arg("k") = 100.0, py::arg("min_size") = 1, py::arg("sigma") = 0.0,
        "Dense segment labels (HxW int array).");

    m.def(
        "propose",
        [](const FloatArray& a, const std::string& preset, std::uint64_t seed, long long min_area) {
            const ProposalSet p = propose(to_image(a), strategy_preset(preset), seed, {0, min_area});
            py::list out;
            for (const BoundingBox& b : p.boxes) out.append(box_tuple(b));
            return out;
        },
        py::arg("image"), py::arg("preset") = "fast", py::arg("seed") = 1, py::arg("min_area") = 0,
        "Region proposals as (x_min, y_min, x_max, y_max) tuples.");

    m.def("categories", [] {
        std::vector<std::string> names;
        for (const OntologyCategory& c : ontology()) names.push_back(c.name);
        return names;
    });

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
        .def_static("random",
                    [](int input_size, std::uint64_t seed) {
                        const NetworkSpec net = tiny_network(input_size);
                        return Checkpoint{net, init_parameters(net, seed)};
                    },
                    py::arg("input_size") = 20, py::arg("seed") = 1, "Untrained tiny network.")
        .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(p, c); })
        .def_property_readonly("spec", [](const Checkpoint& c) { return to_text(c.net); })
        .def_property_readonly("checksum", [](const Checkpoint& c) { return checksum(c.params); })
        .def("predict", [](const Checkpoint& c, const FloatArray& patch) {
            return predict(c.net, c.params, patch_to_input(c.net, to_image(patch))).p;
        });

    m.def(
        "detect",
        [](const FloatArray& a, const Checkpoint& model, const std::string& preset, double cutoff, double nms_threshold,
           std::uint64_t seed) {
            DetectorConfig cfg;
            cfg.strategies = strategy_preset(preset);
            cfg.confidence_cutoff = cutoff;
            cfg.apply_nms = nms_threshold > 0.0;
            if (cfg.apply_nms) cfg.nms_threshold = nms_threshold;
            cfg.seed = seed;
            py::list out;
            for (const Detection& d : detect(to_image(a), model, cfg)) out.append(detection_dict(d));
            return out;
        },
        py::arg("image"), py::arg("model"), py::arg("preset") = "fast", py::arg("cutoff") = 0.0, py::arg("nms") = 0.0,
        py::arg("seed") = 1);

    m.def(
        "render",
        [](const FloatArray& a, const std::vector<py::dict>& dets) {
            std::vector<Detection> ds;
            for (const py::dict& d : dets) {
                const int cat = d.contains("category_id") ? d["category_id"].cast<int>()
                                                          : category_id(d["category"].cast<std::string>());
                ds.push_back({to_box(d["box"].cast<py::sequence>()), cat, d["confidence"].cast<double>()});
            }
            return to_array(render_overlay(to_image(a), ds));
        },
        py::arg("image"), py::arg("detections"));

    m.def(
        "evaluate",
        [](const std::filesystem::path& detections, const std::filesystem::path& annotations, double iou_threshold,
           double min_confidence) {
            const MetricsReport r =
                evaluate(pair_by_image(load_detections(detections), load_annotations(annotations)), iou_threshold,
                         min_confidence);
            py::dict out;
            out["precision"] = r.precision;
            out["recall"] = r.recall;
            out["f1"] = r.f1;
            out["tp"] = r.tp;
            out["fp"] = r.fp;
            out["fn"] = r.fn;
            return out;
        },
        py::arg("detections"), py::arg("annotations"), py::arg("iou") = 0.5, py::arg("min_confidence") = 0.0);

    m.def("f1_score", &f1_score, py::arg("precision"), py::arg("recall"));

    m.def(
        "synthesize",
        [](const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
            SyntheticSceneSpec spec;
            spec.seed = seed;
            const SyntheticDataset data = generate_synthetic(spec, count);
            save_dataset(dir, data);
            return dir / "annotations.txt";
        },
        py::arg("directory"), py::arg("count"), py::arg("seed") = 1, "Writes PPMs plus annotations.txt.");

    m.def("spectral_radius", [](double curvature, double lr, double momentum) {
        return spectral_radius({curvature, lr, momentum, 1, 1.0});
    });
    m.def(
        "simulate_quadratic",
        [](double curvature, double lr, double momentum, int steps, double theta0) {
            return simulate_quadratic({curvature, lr, momentum, steps, theta0});
        },
        py::arg("curvature"), py::arg("lr"), py::arg("momentum"), py::arg("steps") = 100, py::arg("theta0") = 1.0);
}
