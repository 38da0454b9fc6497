#ifndef FLOWLAB_IO_HPP
#define FLOWLAB_IO_HPP

#include "flowlab/bench.hpp"
#include "flowlab/linear_theory.hpp"
#include "flowlab/trainers.hpp"
#include "flowlab/weighting.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace flowlab::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

/// Shortest decimal that round-trips; "nan", "inf" and "-inf" otherwise.
std::string format_double(double v);

/// Single-column CSV with header `loss`. Parse errors name the 1-based line.
LossVector parse_losses_csv(const std::string& text);
LossVector read_losses_csv(const fs::path& path);
std::string losses_csv(const LossVector& losses);

/// `index,weight`.
std::string weights_csv(const WeightVector& weights);

/// The sidecar path for a weights file: the same path with a .json extension.
fs::path sidecar_path(const fs::path& weights_path);
Json weights_sidecar(const WeightVector& weights, const TemperaturePolicy& policy);

/// `k,method,coef_e,coef_eperp,err1,err2,err_tot,gamma`, one block per
/// trajectory.
std::string trajectory_csv(const std::vector<theory::Trajectory<double>>& trajectories);

/// `row,col,closed,mc,abs_err`.
std::string covariance_csv(const Eigen::MatrixXd& closed, const Eigen::MatrixXd& mc);

/// `method,pretrain_acc,target_acc,average,delta_pre,delta_target,hard_acc`.
std::string report_csv(const std::vector<ReportRow>& rows);
Json report_json(const EvalReport& report);

/// {"dims": {"input", "hidden", "heads": {task: classes}},
///  "body": [W row-major, b], "heads": {task: [W row-major, b]}}
Json checkpoint_json(const MultiHeadModel& model);
MultiHeadModel model_from_checkpoint(const Json& j);

std::string read_text(const fs::path& path);
/// Writes via a temporary file and rename so readers never see a partial
/// file. Creates parent directories.
void write_text(const fs::path& path, const std::string& text);
Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);

}  // namespace flowlab::io

#endif  // FLOWLAB_IO_HPP
