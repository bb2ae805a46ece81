#include "dynclass/model_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dynclass {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    return m;
}

json bool_matrix_to_json(const BoolMatrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(static_cast<int>(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

BoolMatrix bool_matrix_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
    BoolMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<int>() != 0;
    return m;
}

json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Vector vector_from_json(const json& j) {
    Vector v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

}  // namespace

std::string model_to_json(const ModelParams& params, const ModelMetadata& meta) {
    json j;
    j["dims"] = {{"num_states", params.dims.num_states},
                 {"num_markers", params.dims.num_markers},
                 {"t_star", params.dims.t_star}};
    j["pi"] = vector_to_json(params.init.pi);
    j["rho"] = matrix_to_json(params.intensity.rho);
    j["structure_mask"] = bool_matrix_to_json(params.intensity.structure_mask);
    j["emission"] = matrix_to_json(params.emission.e);
    j["feasible_mask"] = bool_matrix_to_json(params.emission.feasible_mask);
    j["knots"] = params.discrim.basis.knot_vector;
    j["spline_order"] = params.discrim.basis.order;
    j["eta"] = matrix_to_json(params.discrim.eta);
    j["beta"] = matrix_to_json(params.discrim.beta);
    j["metadata"] = {{"seed", meta.seed},
                     {"fit_config_hash", meta.fit_config_hash},
                     {"version", meta.version}};
    return j.dump(2);
}

ModelParams model_from_json(const std::string& text, ModelMetadata* meta) {
    json j = json::parse(text);
    ModelParams p;
    p.dims.num_states = j.at("dims").at("num_states").get<int>();
    p.dims.num_markers = j.at("dims").at("num_markers").get<int>();
    p.dims.t_star = j.at("dims").at("t_star").get<double>();
    p.init.pi = vector_from_json(j.at("pi"));
    p.intensity.rho = matrix_from_json(j.at("rho"));
    p.intensity.structure_mask = bool_matrix_from_json(j.at("structure_mask"));
    p.emission.e = matrix_from_json(j.at("emission"));
    p.emission.feasible_mask = bool_matrix_from_json(j.at("feasible_mask"));
    auto knots = j.at("knots").get<std::vector<double>>();
    SplineBasis basis;
    basis.order = j.at("spline_order").get<int>();
    basis.knot_vector = knots;
    basis.t_star = p.dims.t_star;
    basis.interior_knots = static_cast<int>(knots.size()) - 2 * basis.order;
    p.discrim.basis = basis;
    p.discrim.eta = matrix_from_json(j.at("eta"));
    p.discrim.beta = matrix_from_json(j.at("beta"));
    if (meta && j.contains("metadata")) {
        meta->seed = j["metadata"].value("seed", std::uint64_t{0});
        meta->fit_config_hash = j["metadata"].value("fit_config_hash", std::uint64_t{0});
        meta->version = j["metadata"].value("version", std::string{"1"});
    }
    return p;
}

void save_model(const ModelParams& params, const std::string& path, const ModelMetadata& meta) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << model_to_json(params, meta) << "\n";
}

ModelParams load_model(const std::string& path, ModelMetadata* meta) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text, meta);
}

}  // namespace dynclass
