#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace causalcollab {

/// One interaction step: the LM output (context) and the human action.
struct Step {
  Eigen::VectorXd l;
  Eigen::VectorXd a;
};

enum class Split { observational, counterfactual };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Trajectory {
  std::string id;
  std::vector<Step> steps;
  int y = 0;
  std::optional<int> x;  // ground-truth confounder, evaluation only
  Split split = Split::observational;
};

struct DatasetMeta {
  int T = 0;
  int d = 0;
  std::optional<double> alpha;
  std::optional<double> sigma;
  std::optional<std::int64_t> seed;
  std::string source;
};

/// Immutable, validated collection of trajectories. Copies share storage.
class Dataset {
 public:
  /// Validates every invariant; throws DimensionError / std::invalid_argument.
  Dataset(DatasetMeta meta, std::vector<Trajectory> trajectories);

  const DatasetMeta& meta() const { return impl_->meta; }
  std::span<const Trajectory> trajectories() const { return impl_->trajectories; }
  const Trajectory& operator[](std::size_t i) const { return impl_->trajectories[i]; }
  std::size_t size() const { return impl_->trajectories.size(); }
  int T() const { return impl_->meta.T; }
  int d() const { return impl_->meta.d; }

  /// New dataset holding the selected trajectories in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  /// SHA-256 of the canonical JSONL serialization (computed once, cached).
  const std::string& digest() const;

  bool all_in_split(Split s) const;

 private:
  struct Impl {
    DatasetMeta meta;
    std::vector<Trajectory> trajectories;
    mutable std::string digest;
    mutable std::once_flag digest_once;
  };
  std::shared_ptr<const Impl> impl_;
};

/// Canonical JSONL text: header line then one line per trajectory.
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

/// Throws LeakageError unless every trajectory is observational.
void require_observational(const Dataset& ds, const std::string& context);

}  // namespace causalcollab
