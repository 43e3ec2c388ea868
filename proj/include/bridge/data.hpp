#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bridge {

// Trial indicator values.
inline constexpr int kSourceTrial = 0;  // trial supplying the bridge to arm 1 ("175")
inline constexpr int kTargetTrial = 1;  // target-population trial ("320")

// Arm labels shared by both trials.
inline constexpr int kArmMono = 1;
inline constexpr int kArmShared = 2;
inline constexpr int kArmTriple = 3;

// True when arm a can occur in trial s (s=0: arms 1,2; s=1: arms 2,3).
constexpr bool arm_allowed(int s, int a) noexcept {
  return (s == kSourceTrial && (a == kArmMono || a == kArmShared)) ||
         (s == kTargetTrial && (a == kArmShared || a == kArmTriple));
}

enum class CovariateType { Real, Binary };

struct CovariateColumn {
  std::string name;
  CovariateType type = CovariateType::Real;
};

class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<CovariateColumn> columns);

  const std::vector<CovariateColumn>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws Error(UnknownCovariate) when absent.
  std::size_t index_of(std::string_view name) const;
  // Stable 64-bit FNV-1a digest of names and types, rendered as hex.
  std::string hash() const;

  friend bool operator==(const CovariateSchema&, const CovariateSchema&);

 private:
  std::vector<CovariateColumn> columns_;
};

struct SubjectRecord {
  std::string id;
  int s = kTargetTrial;
  int a = kArmShared;
  double t_star = 0.0;
  int delta = 0;
  // One value per schema column; W and V are both drawn from these by name.
  std::vector<double> covariates;

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

struct Restriction {
  std::string covariate;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::size_t records_before = 0;
  std::size_t records_after = 0;

  std::string describe() const;
};

struct Provenance {
  std::string source;
  std::string schema_hash;
  std::vector<Restriction> restrictions;
};

struct TrialCounts {
  std::size_t n_source = 0;  // n175
  std::size_t n_target = 0;  // n320
  // arm_counts[s][a], a indexed 1..3
  std::size_t arm_counts[2][4] = {};
};

class FusedDataset {
 public:
  FusedDataset() = default;
  FusedDataset(std::vector<SubjectRecord> records, double admin_censor_time,
               CovariateSchema schema, Provenance provenance = {});

  const std::vector<SubjectRecord>& records() const noexcept { return records_; }
  double admin_censor_time() const noexcept { return admin_censor_time_; }
  const CovariateSchema& schema() const noexcept { return schema_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return records_.size(); }

  TrialCounts counts() const;

  // Checks every record and dataset-level invariant; throws Error naming the
  // first offending row.
  void validate() const;

  // Same records with the trial indicator replaced; skips trial-arm validation.
  // Used for refitting under a permuted trial indicator.
  FusedDataset with_trial_indicator(const std::vector<int>& s) const;

 private:
  std::vector<SubjectRecord> records_;
  double admin_censor_time_ = 365.0;
  CovariateSchema schema_;
  Provenance provenance_;
};

// Validates one record against the trial-arm, time, event, and covariate-type
// invariants. row is reported in the error.
void validate_record(const SubjectRecord& r, const CovariateSchema& schema,
                     double admin_censor_time, std::size_t row);

// Reads a CSV with header `id,s,a,t,delta,<covariates...>`. Extra columns not
// named in the schema are ignored. Lines starting with '#' are skipped.
FusedDataset load_dataset(std::istream& in, const CovariateSchema& schema,
                          double admin_censor_time, std::string source = "<stream>");
FusedDataset load_dataset_file(const std::string& path, const CovariateSchema& schema,
                               double admin_censor_time);

// Writes the dataset in the load_dataset format using shortest round-trip
// decimal representations.
void write_dataset(std::ostream& out, const FusedDataset& ds);

// Keeps records with lo <= covariate <= hi; records the restriction in the
// provenance. Throws EmptyTrialAfterRestriction if a trial or required arm
// empties.
FusedDataset restrict_range(const FusedDataset& ds, std::string_view covariate, double lo,
                            double hi);

// Shortest decimal string that parses back to exactly x.
std::string format_double(double x);

}  // namespace bridge
