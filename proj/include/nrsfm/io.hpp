#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>

#include "nrsfm/evaluation.hpp"
#include "nrsfm/synthetic.hpp"
#include "nrsfm/training.hpp"

namespace nrsfm::io {

// Malformed, mismatched or unreadable data files.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;

enum class WeightEncoding { Numbers, Base64 };

std::string base64_encode(const double* data, std::size_t count);
std::vector<double> base64_decode(const std::string& text);

// --- datasets --------------------------------------------------------------

nlohmann::json dataset_to_json(const SynthDataset& data);
SynthDataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const SynthDataset& data, const std::string& path);
SynthDataset load_dataset(const std::string& path);

// --- checkpoints -----------------------------------------------------------

struct Checkpoint {
    TrainState state;
    TrainConfig config;
    bool has_occlusions = false;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt,
                                  WeightEncoding enc = WeightEncoding::Numbers);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     WeightEncoding enc = WeightEncoding::Numbers);
Checkpoint load_checkpoint(const std::string& path);

// --- reports ---------------------------------------------------------------

nlohmann::json train_report_to_json(const TrainReport& report, const TrainConfig& cfg,
                                    bool has_occlusions);
nlohmann::json eval_report_to_json(const EvalReport& report, const EvalProtocol& protocol);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

void save_json(const nlohmann::json& j, const std::string& path);
nlohmann::json load_json(const std::string& path);

// --- point clouds ----------------------------------------------------------

// ASCII PLY, one vertex per keypoint with a visibility scalar property.
void write_ply(const Eigen::Matrix3Xd& points, const Eigen::VectorXd& visibility,
               const std::string& path);

}  // namespace nrsfm::io
