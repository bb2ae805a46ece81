#include "dynclass/csv_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dynclass {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv_io: cannot open for writing: " + path);
    out << std::setprecision(17);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv_io: cannot open for reading: " + path);
    return in;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv_io: malformed number '" + s + "' at " + path + ":" +
                                 std::to_string(line_no));
    }
}

int parse_int(const std::string& s, const std::string& path, int line_no) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv_io: malformed integer '" + s + "' at " + path + ":" +
                                 std::to_string(line_no));
    }
}

}  // namespace

void write_cohort_csv(const Dataset& data, const std::string& path) {
    auto out = open_out(path);
    out << "subject_id,time,z,d_last_known";
    for (int u = 1; u <= data.dims.num_markers; ++u) out << ",x" << u;
    out << "\n";
    for (const auto& s : data.subjects)
        for (int j = 0; j < s.visits(); ++j) {
            out << s.subject_id << ',' << s.times[j] << ',' << s.surrogate[j] << ','
                << (s.final_state_known ? 1 : 0);
            for (int u = 0; u < data.dims.num_markers; ++u) out << ',' << s.markers(j, u);
            out << "\n";
        }
}

Dataset read_cohort_csv(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv_io: empty file: " + path);
    const auto header = split_line(line);
    if (header.size() < 5 || header[0] != "subject_id" || header[1] != "time" ||
        header[2] != "z" || header[3] != "d_last_known")
        throw std::runtime_error("csv_io: unexpected cohort header in " + path);
    const int p = static_cast<int>(header.size()) - 4;

    Dataset data;
    data.dims.num_markers = p;
    struct Row {
        std::string id;
        double t;
        int z;
        bool known;
        Vector x;
    };
    std::vector<Row> rows;
    int line_no = 1;
    int max_state = 0;
    double max_time = 0.0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (static_cast<int>(f.size()) != 4 + p)
            throw std::runtime_error("csv_io: wrong field count at " + path + ":" +
                                     std::to_string(line_no));
        Row r;
        r.id = f[0];
        r.t = parse_double(f[1], path, line_no);
        r.z = parse_int(f[2], path, line_no);
        r.known = parse_int(f[3], path, line_no) != 0;
        r.x = Vector(p);
        for (int u = 0; u < p; ++u) r.x[u] = parse_double(f[4 + u], path, line_no);
        max_state = std::max(max_state, r.z);
        max_time = std::max(max_time, r.t);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("csv_io: no data rows in " + path);
    data.dims.num_states = max_state + 1;
    data.dims.t_star = std::nextafter(max_time, max_time + 1.0);

    size_t i = 0;
    while (i < rows.size()) {
        size_t j = i;
        while (j < rows.size() && rows[j].id == rows[i].id) ++j;
        const int m = static_cast<int>(j - i);
        SubjectRecord s;
        s.subject_id = rows[i].id;
        s.markers = Matrix(m, p);
        for (int r = 0; r < m; ++r) {
            s.times.push_back(rows[i + r].t);
            s.surrogate.push_back(rows[i + r].z);
            s.markers.row(r) = rows[i + r].x.transpose();
        }
        s.final_state_known = rows[i].known;
        s.final_state = s.final_state_known ? s.surrogate.back() : -1;
        data.subjects.push_back(std::move(s));
        i = j;
    }
    return data;
}

void write_truth_csv(const Dataset& data, const std::vector<std::vector<int>>& truth,
                     const std::string& path) {
    if (truth.size() != data.subjects.size())
        throw std::invalid_argument("write_truth_csv: truth/subject count mismatch");
    auto out = open_out(path);
    out << "subject_id,time,d_true\n";
    for (size_t i = 0; i < data.subjects.size(); ++i)
        for (int j = 0; j < data.subjects[i].visits(); ++j)
            out << data.subjects[i].subject_id << ',' << data.subjects[i].times[j] << ','
                << truth[i][j] << "\n";
}

std::vector<std::vector<int>> read_truth_csv(const std::string& path, const Dataset& data) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || split_line(line).size() != 3)
        throw std::runtime_error("csv_io: unexpected truth header in " + path);
    std::vector<std::vector<int>> truth(data.subjects.size());
    size_t si = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (f.size() != 3)
            throw std::runtime_error("csv_io: wrong field count at " + path + ":" +
                                     std::to_string(line_no));
        while (si < data.subjects.size() &&
               static_cast<int>(truth[si].size()) == data.subjects[si].visits())
            ++si;
        if (si >= data.subjects.size() || f[0] != data.subjects[si].subject_id)
            throw std::runtime_error("csv_io: truth rows do not align with the cohort at " +
                                     path + ":" + std::to_string(line_no));
        truth[si].push_back(parse_int(f[2], path, line_no));
    }
    for (size_t i = 0; i < truth.size(); ++i)
        if (static_cast<int>(truth[i].size()) != data.subjects[i].visits())
            throw std::runtime_error("csv_io: truth visit count mismatch for subject " +
                                     data.subjects[i].subject_id);
    return truth;
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, int num_states,
                           const std::string& path) {
    auto out = open_out(path);
    out << "subject_id,time,predicted_state";
    for (int k = 0; k < num_states; ++k) out << ",prob_" << k;
    out << "\n";
    for (const auto& r : rows) {
        out << r.subject_id << ',' << r.time << ',' << r.predicted_state;
        for (int k = 0; k < num_states; ++k)
            out << ',' << (r.probs.size() == num_states ? r.probs[k] : std::nan(""));
        out << "\n";
    }
}

std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv_io: empty file: " + path);
    const auto header = split_line(line);
    if (header.size() < 3 || header[0] != "subject_id")
        throw std::runtime_error("csv_io: unexpected prediction header in " + path);
    const int S = static_cast<int>(header.size()) - 3;
    std::vector<PredictionRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (static_cast<int>(f.size()) != 3 + S)
            throw std::runtime_error("csv_io: wrong field count at " + path + ":" +
                                     std::to_string(line_no));
        PredictionRow r;
        r.subject_id = f[0];
        r.time = parse_double(f[1], path, line_no);
        r.predicted_state = parse_int(f[2], path, line_no);
        r.probs = Vector(S);
        for (int k = 0; k < S; ++k)
            r.probs[k] = f[3 + k] == "nan" || f[3 + k] == "-nan"
                             ? std::nan("")
                             : parse_double(f[3 + k], path, line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
    auto out = open_out(path);
    out << "metric,class,value\n";
    for (const auto& r : rows) out << r.metric << ',' << r.cls << ',' << r.value << "\n";
}

void write_benchmark_csv(const BenchmarkResult& result, const std::string& rows_path,
                         const std::string& summary_path) {
    {
        auto out = open_out(rows_path);
        out << "replication,method,failed,accuracy_posterior,accuracy_viterbi,"
               "c,ic,mcc,mse_tran,mse_emis,mse_init,mse_beta,error\n";
        for (const auto& r : result.rows)
            out << r.replication << ',' << r.method << ',' << (r.failed ? 1 : 0) << ','
                << r.accuracy_posterior << ',' << r.accuracy_viterbi << ',' << r.selection.c
                << ',' << r.selection.ic << ',' << r.selection.mcc << ',' << r.mse.tran << ','
                << r.mse.emis << ',' << r.mse.init << ',' << r.mse.beta << ',' << r.error
                << "\n";
    }
    auto out = open_out(summary_path);
    out << "method,replications,failures,accuracy_posterior,accuracy_viterbi,"
           "c,ic,mcc,mse_tran,mse_emis,mse_init,mse_beta\n";
    for (const auto& s : result.summary)
        out << s.method << ',' << s.replications << ',' << s.failures << ','
            << s.accuracy_posterior << ',' << s.accuracy_viterbi << ',' << s.selection.c << ','
            << s.selection.ic << ',' << s.selection.mcc << ',' << s.mse.tran << ','
            << s.mse.emis << ',' << s.mse.init << ',' << s.mse.beta << "\n";
}

}  // namespace dynclass
