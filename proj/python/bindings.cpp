#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deepsr/bench.hpp"
#include "deepsr/config.hpp"
#include "deepsr/infix.hpp"

namespace py = pybind11;
using namespace deepsr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& X)
{
    if (X.ndim() == 1) {
        Matrix m(static_cast<std::size_t>(X.shape(0)), 1);
        std::copy(X.data(), X.data() + X.size(), m.data.begin());
        return m;
    }
    if (X.ndim() != 2) throw std::invalid_argument("X must be one- or two-dimensional");
    Matrix m(static_cast<std::size_t>(X.shape(0)), static_cast<std::size_t>(X.shape(1)));
    std::copy(X.data(), X.data() + X.size(), m.data.begin());
    return m;
}

std::vector<double> to_vector(const Array& y)
{
    if (y.ndim() != 1) throw std::invalid_argument("y must be one-dimensional");
    return {y.data(), y.data() + y.size()};
}

Array to_array(const std::vector<double>& v)
{
    Array a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

Array to_array(const Matrix& m)
{
    Array a({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols)});
    std::copy(m.data.begin(), m.data.end(), a.mutable_data());
    return a;
}

Settings make_settings(const std::map<std::string, std::string>& overrides)
{
    Settings s;
    for (const auto& [k, v] : overrides) s.set(k, v);
    return s;
}

py::list history_rows(const std::vector<HistoryRecord>& history)
{
    py::list rows;
    for (const auto& h : history)
        rows.append(py::dict(py::arg("step") = h.step, py::arg("best_reward") = h.best_reward,
                             py::arg("mean_reward") = h.mean_reward));
    return rows;
}

}  // namespace

PYBIND11_MODULE(_deepsr, m)
{
    m.doc() = "Symbolic regression with a recurrent policy and a GP baseline";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

    py::class_<Library>(m, "Library")
        .def(py::init([](const std::vector<std::string>& operators, const std::vector<std::string>& variables,
                         bool constant) { return Library::build(operators, variables, constant); }),
             py::arg("operators"), py::arg("variables"), py::arg("constant") = false)
        .def_static("default_operators", &Library::default_operators)
        .def("__len__", &Library::size)
        .def_property_readonly("symbols", [](const Library& lib) {
            std::vector<std::string> out;
            for (const auto& t : lib.tokens()) out.push_back(t.symbol);
            return out;
        });

    py::class_<Expression>(m, "Expression")
        .def_readwrite("tokens", &Expression::tokens)
        .def_readwrite("constants", &Expression::constants)
        .def("complexity", [](const Expression& e) { return complexity(e); });

    m.def("parse", &parse_expression, py::arg("library"), py::arg("text"),
          "Parse pre-order text (\"add x x\") or infix (\"x + x\").");
    m.def("serialize", &serialize, py::arg("library"), py::arg("expr"));
    m.def("infix", &render_infix, py::arg("library"), py::arg("expr"));
    m.def(
        "evaluate",
        [](const Library& lib, const Expression& e, const Array& X) { return to_array(evaluate(lib, e, to_matrix(X))); },
        py::arg("library"), py::arg("expr"), py::arg("X"));
    m.def(
        "nrmse", [](const Array& y, const Array& y_hat) { return nrmse(to_vector(y), to_vector(y_hat)); }, py::arg("y"),
        py::arg("y_hat"));
    m.def(
        "reward",
        [](const Library& lib, const Expression& e, const Array& X, const Array& y, double coef) {
            return reward(lib, e, to_matrix(X), to_vector(y), coef);
        },
        py::arg("library"), py::arg("expr"), py::arg("X"), py::arg("y"), py::arg("complexity_coef") = 0.0);
    m.def(
        "optimize_constants",
        [](const Library& lib, const Expression& e, const Array& X, const Array& y) {
            const auto r = optimize_constants(lib, e, to_matrix(X), to_vector(y));
            return py::make_tuple(r.expr, r.mse, r.converged);
        },
        py::arg("library"), py::arg("expr"), py::arg("X"), py::arg("y"),
        "Returns (expression with fitted constants, mse, converged).");

    m.def("settings", [](const std::map<std::string, std::string>& overrides) { return make_settings(overrides).entries(); },
          py::arg("overrides") = std::map<std::string, std::string>{},
          "All configuration keys with their values after applying overrides.");

    m.def(
        "fit",
        [](const Library& lib, const Array& X, const Array& y, const std::vector<std::string>& variables,
           const std::map<std::string, std::string>& overrides) {
            const auto s = make_settings(overrides);
            Dataset d{to_matrix(X), to_vector(y), variables};
            d.validate();
            FitOutcome out;
            {
                py::gil_scoped_release release;
                out = fit_method(s.method, s.train_config(), s.gp_config(), lib, d);
            }
            return py::dict(py::arg("expression") = out.best, py::arg("reward") = out.train_reward,
                            py::arg("history") = history_rows(out.history));
        },
        py::arg("library"), py::arg("X"), py::arg("y"), py::arg("variables"),
        py::arg("settings") = std::map<std::string, std::string>{},
        "Train with the method named by settings['task.method'] (dsr or gp).");

    m.def("benchmarks", [] {
        std::vector<std::string> names;
        for (const auto& b : benchmark_catalogue()) names.push_back(b.name);
        return names;
    });
    m.def(
        "benchmark_data",
        [](const std::string& name, std::uint64_t seed, const std::string& split, int multiplier) {
            if (split != "train" && split != "test") throw std::invalid_argument("split must be train or test");
            const auto d = generate_dataset(find_benchmark(name), seed, split == "train" ? Split::Train : Split::Test,
                                            multiplier);
            return py::make_tuple(to_array(d.X), to_array(d.y));
        },
        py::arg("name"), py::arg("seed") = 0, py::arg("split") = "train", py::arg("multiplier") = 1);
    m.def("benchmark_library", [](const std::string& name) { return find_benchmark(name).library(); }, py::arg("name"));
    m.def(
        "run_benchmark",
        [](const std::string& name, const std::map<std::string, std::string>& overrides) {
            auto s = make_settings(overrides);
            RunSpec spec{s.method, name, s.seed, s.noise, s.data_multiplier, s.ablation};
            RunRecord r;
            {
                py::gil_scoped_release release;
                r = run_single(spec, s.train_config(), s.gp_config());
            }
            if (!r.error.empty()) throw std::runtime_error(r.error);
            return py::dict(py::arg("benchmark") = r.benchmark, py::arg("method") = r.method,
                            py::arg("seed") = r.seed, py::arg("recovered") = r.recovered,
                            py::arg("train_reward") = r.train_reward, py::arg("test_nrmse") = r.test_nrmse,
                            py::arg("expression") = r.expression, py::arg("infix") = r.infix,
                            py::arg("steps") = r.steps);
        },
        py::arg("name"), py::arg("settings") = std::map<std::string, std::string>{},
        "One benchmark run; seed, noise and method come from the run.* and task.* settings.");
}
