#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nbhd {

/// Every failure the library reports. The names match the error vocabulary
/// of the pipeline contracts so callers (and tests) can branch on them.
enum class ErrorKind {
  // ingest
  MalformedRow,
  DuplicateTile,
  MissingGeometry,
  OutOfRangeFraction,
  OrphanPanorama,
  MissingOutcome,
  // elicit
  NotJson,
  SchemaViolation,
  UnknownToken,
  CountMismatch,
  BandCutpoint,
  BandValueMismatch,
  IllegalZero,
  EndpointUnavailable,
  ValidationFailedAllRetries,
  // aggregate
  EmptyInput,
  DegenerateVariance,
  LengthMismatch,
  MissingApproachValue,
  // spatial
  InvalidGeometry,
  DimensionMismatch,
  // econ / stackinf / quantfit
  RankDeficient,
  TooFewClusters,
  NoWithinVariation,
  NonConvergence,
  LikelihoodNotConcave,
  UnbalancedBlock,
  BootstrapFailures,
  Unbounded,
  // simgen
  SingularSystem,
  // cli
  ConfigInvalid,
  StageInputMissing,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace nbhd
