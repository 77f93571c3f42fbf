// chainscan - sequential malware detection pipeline
// Labeled dataset manifests: CSV `path,sha256,label,family[,report_path]`.

#ifndef CHAINSCAN_DATASET_HPP
#define CHAINSCAN_DATASET_HPP

#include "chainscan/detectors.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chainscan {

enum class ground_truth { benign, malware };

const char* to_string(ground_truth g);

struct labeled_sample {
    std::filesystem::path path;
    std::string sha256;
    ground_truth truth = ground_truth::benign;
    std::string family;  // empty when unknown
    std::optional<std::filesystem::path> report_path;

    std::string id() const { return path.filename().string(); }
};

class manifest_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Relative paths resolve against the manifest's directory. The header row
/// is required. Labels are "malware" or "benign". When report_path is empty
/// and `<path>.report.json` exists, that sidecar is used.
std::vector<labeled_sample> load_manifest(const std::filesystem::path& manifest);

/// Writes paths relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& manifest, const std::vector<labeled_sample>& samples);

/// Reads the file; throws std::runtime_error on I/O failure or, with
/// `verify_hash`, when the content does not hash to sha256.
sample_input load_sample(const labeled_sample& s, bool verify_hash = false);

}  // namespace chainscan

#endif  // CHAINSCAN_DATASET_HPP
