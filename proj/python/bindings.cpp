#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hydra/config.hpp"
#include "hydra/dataset.hpp"
#include "hydra/muap.hpp"
#include "hydra/tensor_io.hpp"

namespace py = pybind11;
using namespace hydra;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F32Array& a) {
    if (a.ndim() < 1 || a.ndim() > 4) throw std::invalid_argument("tensors have rank 1..4");
    std::vector<uint32_t> dims(a.shape(), a.shape() + a.ndim());
    return Tensor(dims, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
    py::array_t<float> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

py::array_t<float> stack_numpy(const std::vector<Tensor>& ts) {
    if (ts.empty()) return py::array_t<float>(std::vector<py::ssize_t>{0});
    std::vector<py::ssize_t> shape{py::ssize_t(ts.size())};
    shape.insert(shape.end(), ts[0].dims.begin(), ts[0].dims.end());
    py::array_t<float> out(shape);
    float* p = out.mutable_data();
    for (auto& t : ts) p = std::copy(t.data.begin(), t.data.end(), p);
    return out;
}

RunConfig make_config(const std::string& profile, const std::map<std::string, std::string>& overrides) {
    RunConfig c;
    c.apply_profile(profile);
    for (auto& [k, v] : overrides) c.set(k, v);
    return c;
}

py::list sources_to_py(const std::vector<SourceEstimate>& src) {
    py::list out;
    for (auto& s : src) {
        py::dict d;
        d["spikes"] = s.spikes;
        d["firings"] = s.firings;
        d["sil"] = s.sil;
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "HYDRA-HGR core: HYDT tensors, synthetic HD-sEMG, decomposition, MUAP images, ViT inference";

    py::register_exception<HydtError>(m, "HydtError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);

    m.def("encode_tensor", [](const F32Array& a) { return py::bytes(encode_tensor(to_tensor(a))); });
    m.def("decode_tensor", [](const py::bytes& b) { return to_numpy(decode_tensor(std::string(b))); });
    m.def("write_tensor", [](const std::string& path, const F32Array& a) { write_tensor(path, to_tensor(a)); });
    m.def("read_tensor", [](const std::string& path) { return to_numpy(read_tensor(path)); });

    py::class_<SeededRng>(m, "SeededRng")
        .def(py::init<uint64_t>(), py::arg("seed") = 0)
        .def("next_u64", &SeededRng::next_u64)
        .def("uniform", py::overload_cast<>(&SeededRng::uniform))
        .def("normal", py::overload_cast<>(&SeededRng::normal))
        .def("fork", &SeededRng::fork);

    m.def(
        "config",
        [](const std::string& profile, const std::map<std::string, std::string>& overrides) {
            return make_config(profile, overrides).dump();
        },
        py::arg("profile") = "paper", py::arg("overrides") = std::map<std::string, std::string>{},
        "Resolved configuration text for a profile plus key overrides.");

    m.def(
        "generate",
        [](const std::string& profile, const std::map<std::string, std::string>& overrides) {
            RunConfig c = make_config(profile, overrides);
            DatasetWindows w;
            {
                py::gil_scoped_release nogil;
                w = build_windows(c.dataset(), c.preprocess());
            }
            py::dict d;
            d["raw"] = stack_numpy(w.raw);
            d["prep"] = stack_numpy(w.prep);
            d["labels"] = w.labels;
            d["repetitions"] = w.repetitions;
            return d;
        },
        py::arg("profile") = "paper", py::arg("overrides") = std::map<std::string, std::string>{},
        "Synthetic gesture windows: raw and preprocessed [n, 512, 8, 16] plus labels and repetitions.");

    m.def(
        "write_dataset",
        [](const std::string& dir, const F32Array& raw, const F32Array& prep, const std::vector<int>& labels,
           const std::vector<int>& reps, uint64_t subject) {
            Tensor r = to_tensor(raw), p = to_tensor(prep);
            if (r.rank() != 4 || r.dims != p.dims || r.dims[0] != labels.size() || labels.size() != reps.size())
                throw std::invalid_argument("write_dataset: raw/prep must be matching [n, 512, 8, 16] with n labels");
            DatasetWindows w;
            const size_t per = r.size() / r.dims[0];
            std::vector<uint32_t> wd(r.dims.begin() + 1, r.dims.end());
            for (size_t i = 0; i < r.dims[0]; ++i) {
                w.raw.emplace_back(wd, std::vector<float>(r.data.begin() + i * per, r.data.begin() + (i + 1) * per));
                w.prep.emplace_back(wd, std::vector<float>(p.data.begin() + i * per, p.data.begin() + (i + 1) * per));
            }
            w.labels = labels;
            w.repetitions = reps;
            write_dataset(dir, w, subject);
        },
        py::arg("dir"), py::arg("raw"), py::arg("prep"), py::arg("labels"), py::arg("repetitions"), py::arg("subject") = 0);

    m.def("read_manifest", [](const std::string& dir) {
        py::list rows;
        for (auto& r : read_manifest(dir)) rows.append(py::make_tuple(r.window_path, r.label, r.repetition, r.subject));
        return rows;
    });

    m.def(
        "decompose_window",
        [](const F32Array& x, const std::map<std::string, std::string>& overrides) {
            RunConfig c = make_config("paper", overrides);
            Tensor t = to_tensor(x);
            std::vector<SourceEstimate> src;
            {
                py::gil_scoped_release nogil;
                SeededRng unused(0);
                src = decompose_window(t, c.decomposition(), unused);
            }
            return sources_to_py(src);
        },
        py::arg("x"), py::arg("overrides") = std::map<std::string, std::string>{},
        "Decompose a [channels, samples] window; returns dicts with spikes, firings and sil.");

    m.def(
        "muap_stack",
        [](const F32Array& raw_window, const std::map<std::string, std::string>& overrides) {
            RunConfig c = make_config("paper", overrides);
            Tensor t = to_tensor(raw_window);
            StackResult r;
            {
                py::gil_scoped_release nogil;
                r = window_stack(t, c.decomposition());
            }
            return py::make_tuple(to_numpy(r.stack), sources_to_py(r.sources));
        },
        py::arg("raw_window"), py::arg("overrides") = std::map<std::string, std::string>{},
        "MUAP peak-to-peak stack [7, 8, 16] of a raw [512, 8, 16] window, plus its sources.");

    m.def("rate_of_agreement", &rate_of_agreement, py::arg("est"), py::arg("truth"), py::arg("tol") = 1,
          py::arg("dmin") = 0, py::arg("dmax") = 0);

    m.def("envelope", [](const F32Array& x) { return to_numpy(envelope(to_tensor(x))); },
          "Rectify and zero-phase low-pass a [channels, samples] signal.");
    m.def("mu_law_normalize", [](const F32Array& x, double mu) { return to_numpy(mu_law_normalize(to_tensor(x), mu)); },
          py::arg("x"), py::arg("mu") = 255.0);
    m.def("to_grid", [](const F32Array& x) { return to_numpy(to_grid(to_tensor(x))); });
    m.def("from_grid", [](const F32Array& x) { return to_numpy(from_grid(to_tensor(x))); });

    py::class_<VitModel>(m, "VitModel")
        .def_static("load", &load_vit, py::arg("dir"))
        .def_property_readonly("num_classes", [](const VitModel& v) { return v.cfg.num_classes; })
        .def_property_readonly("embed_dim", [](const VitModel& v) { return v.cfg.embed_dim; })
        .def_property_readonly("num_parameters", [](const VitModel& v) { return v.params.size(); })
        .def("logits", [](const VitModel& v, const F32Array& sample) {
            Tensor t = to_tensor(sample);
            if (int(t.size()) != v.cfg.sample_size()) throw std::invalid_argument("sample has the wrong number of values");
            Eigen::VectorXd z = forward(v, t.data.data()).logits;
            return std::vector<double>(z.data(), z.data() + z.size());
        });
    m.def("macro_input", [](const F32Array& prep_window) { return to_numpy(macro_input(to_tensor(prep_window))); });
    m.def("micro_input", [](const F32Array& stack) { return to_numpy(micro_input(to_tensor(stack))); });

    m.def("accuracy", &accuracy);
    m.def("kfold_split", [](const std::vector<int>& labels, const std::vector<int>& reps, int folds) {
        py::list out;
        for (auto& f : kfold_split(labels, reps, folds)) out.append(py::make_tuple(f.fold_idx, f.test_repetition, f.train_repetitions));
        return out;
    }, py::arg("labels"), py::arg("repetitions"), py::arg("folds") = 5);
}
