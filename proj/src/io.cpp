#include "flowlab/io.hpp"

#include "flowlab/errors.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>

namespace flowlab::io {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

Json dense_json(const Dense& block) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < block.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < block.weight.cols(); ++c) out.push_back(block.weight(r, c));
    for (Eigen::Index i = 0; i < block.bias.size(); ++i) out.push_back(block.bias[i]);
    return out;
}

Dense dense_from_json(const Json& j, Eigen::Index out_dim, Eigen::Index in_dim, const std::string& what) {
    require(j.is_array(), Errc::ParseError, what + " must be an array");
    require(static_cast<Eigen::Index>(j.size()) == out_dim * in_dim + out_dim, Errc::ParseError,
            what + " has " + std::to_string(j.size()) + " values, expected " + std::to_string(out_dim * (in_dim + 1)));
    Dense d{Eigen::MatrixXd(out_dim, in_dim), Eigen::VectorXd(out_dim)};
    std::size_t pos = 0;
    for (Eigen::Index r = 0; r < out_dim; ++r)
        for (Eigen::Index c = 0; c < in_dim; ++c) d.weight(r, c) = j.at(pos++).get<double>();
    for (Eigen::Index i = 0; i < out_dim; ++i) d.bias[i] = j.at(pos++).get<double>();
    return d;
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

LossVector parse_losses_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string cell = trim(line);
        if (!header) {
            require(cell == "loss", Errc::ParseError, "line 1: expected header 'loss', got '" + cell + "'");
            header = true;
            continue;
        }
        if (cell.empty()) continue;
        double v = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        require(res.ec == std::errc{} && res.ptr == cell.data() + cell.size(), Errc::ParseError,
                "line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
        require(std::isfinite(v), Errc::NonFiniteLoss, "line " + std::to_string(line_no) + ": loss is not finite");
        require(v >= 0, Errc::NegativeLoss, "line " + std::to_string(line_no) + ": loss is negative");
        values.push_back(v);
    }
    require(header, Errc::ParseError, "line 1: missing header 'loss'");
    require(!values.empty(), Errc::EmptyInput, "loss file has no rows");
    return LossVector(values);
}

LossVector read_losses_csv(const fs::path& path) { return parse_losses_csv(read_text(path)); }

std::string losses_csv(const LossVector& losses) {
    std::string out = "loss\n";
    for (Eigen::Index i = 0; i < losses.size(); ++i) out += format_double(losses[i]) + '\n';
    return out;
}

std::string weights_csv(const WeightVector& weights) {
    std::string out = "index,weight\n";
    for (Eigen::Index i = 0; i < weights.values.size(); ++i)
        out += std::to_string(i) + ',' + format_double(weights.values[i]) + '\n';
    return out;
}

fs::path sidecar_path(const fs::path& weights_path) {
    fs::path p = weights_path;
    return p.replace_extension(".json");
}

Json weights_sidecar(const WeightVector& weights, const TemperaturePolicy& policy) {
    return Json{{"tau", weights.tau}, {"policy", policy.to_string()}};
}

std::string trajectory_csv(const std::vector<theory::Trajectory<double>>& trajectories) {
    std::string out = "k,method,coef_e,coef_eperp,err1,err2,err_tot,gamma\n";
    for (const auto& t : trajectories)
        for (const auto& p : t.points) {
            out += std::to_string(p.k) + ',' + t.method + ',' + format_double(p.coef_e) + ',' +
                   format_double(p.coef_eperp) + ',' + format_double(p.err1) + ',' + format_double(p.err2) + ',' +
                   format_double(p.err_tot) + ',' + (std::isnan(p.gamma) ? "" : format_double(p.gamma)) + '\n';
        }
    return out;
}

std::string covariance_csv(const Eigen::MatrixXd& closed, const Eigen::MatrixXd& mc) {
    require(closed.rows() == mc.rows() && closed.cols() == mc.cols(), Errc::DimensionMismatch,
            "closed-form and Monte-Carlo matrices differ in shape");
    std::string out = "row,col,closed,mc,abs_err\n";
    for (Eigen::Index r = 0; r < closed.rows(); ++r)
        for (Eigen::Index c = 0; c < closed.cols(); ++c)
            out += std::to_string(r) + ',' + std::to_string(c) + ',' + format_double(closed(r, c)) + ',' +
                   format_double(mc(r, c)) + ',' + format_double(std::abs(closed(r, c) - mc(r, c))) + '\n';
    return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "method,pretrain_acc,target_acc,average,delta_pre,delta_target,hard_acc\n";
    for (const auto& r : rows)
        out += r.method + ',' + format_double(r.pretrain_acc) + ',' + format_double(r.target_acc) + ',' +
               format_double(r.average) + ',' + format_double(r.delta_pre) + ',' + format_double(r.delta_target) +
               ',' + format_double(r.hard_acc) + '\n';
    return out;
}

Json report_json(const EvalReport& report) {
    Json rows = Json::array();
    for (const auto& r : report.rows) {
        Json row{{"method", r.method},         {"pretrain_acc", r.pretrain_acc}, {"target_acc", r.target_acc},
                 {"average", r.average},       {"delta_pre", r.delta_pre},       {"hard_acc", r.hard_acc}};
        row["delta_target"] = std::isnan(r.delta_target) ? Json(nullptr) : Json(r.delta_target);
        rows.push_back(std::move(row));
    }
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(report.spec_hash));
    return Json{{"rows", rows},
                {"spec_hash", hash},
                {"seed", report.seed},
                {"pretrained_acc", report.pretrained_acc},
                {"hard_fraction", report.hard_fraction}};
}

Json checkpoint_json(const MultiHeadModel& model) {
    Json dims{{"input", model.input_dim()}, {"hidden", model.hidden_dim()}, {"heads", Json::object()}};
    Json heads = Json::object();
    for (const auto& [task, head] : model.heads) {
        dims["heads"][task] = head.out_dim();
        heads[task] = dense_json(head);
    }
    return Json{{"dims", dims}, {"body", dense_json(model.body)}, {"heads", heads}};
}

MultiHeadModel model_from_checkpoint(const Json& j) {
    try {
        const Json& dims = j.at("dims");
        const auto input = dims.at("input").get<Eigen::Index>();
        const auto hidden = dims.at("hidden").get<Eigen::Index>();
        require(input >= 1 && hidden >= 1, Errc::ParseError, "checkpoint dims must be >= 1");
        MultiHeadModel m;
        m.body = dense_from_json(j.at("body"), hidden, input, "body");
        for (const auto& [task, classes] : dims.at("heads").items()) {
            const auto c = classes.get<Eigen::Index>();
            m.heads.emplace(task, dense_from_json(j.at("heads").at(task), c, hidden, "head '" + task + "'"));
        }
        require(j.at("heads").size() == m.heads.size(), Errc::ParseError, "checkpoint heads and dims disagree");
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ParseError, std::string("malformed checkpoint: ") + e.what());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::ParseError, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), Errc::ConfigError, "cannot write '" + path.string() + "'");
        out << text;
        require(static_cast<bool>(out), Errc::ConfigError, "write to '" + path.string() + "' failed");
    }
    fs::rename(tmp, path);
}

Json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(Errc::ParseError, "'" + path.string() + "': " + e.what());
    }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace flowlab::io
