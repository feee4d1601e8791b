#pragma once

#include <stdexcept>
#include <string>

namespace ddsc {

enum class Errc {
  // data / validation
  negative_weight,
  weight_sum_mismatch,
  non_finite_support,
  empty_support,
  dimension_mismatch,
  duplicate_id,
  too_few_distributions,
  invalid_config,
  parse_error,
  schema_error,
  bad_magic,
  truncated_file,
  label_count_mismatch,
  length_mismatch,
  shape_mismatch,
  io_error,
  // numerical preconditions
  too_few_samples,
  bandwidth_not_resolved,
  non_positive_epsilon,
  negative_sigma,
  tau_out_of_range,
  all_entries_uncomputed,
  isolated_node,
  invalid_theta,
  vacuous_bound,
  zero_gap,
  not_orthonormal,
  missing_diagnostics,
  // solver
  solver_failure,
  not_converged,
  convergence_failure,
};

enum class ErrorCategory { usage, data, solver };

constexpr ErrorCategory category(Errc code) noexcept {
  switch (code) {
    case Errc::solver_failure:
    case Errc::not_converged:
    case Errc::convergence_failure:
      return ErrorCategory::solver;
    default:
      return ErrorCategory::data;
  }
}

constexpr const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::negative_weight: return "NegativeWeight";
    case Errc::weight_sum_mismatch: return "WeightSumMismatch";
    case Errc::non_finite_support: return "NonFiniteSupport";
    case Errc::empty_support: return "EmptySupport";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::too_few_distributions: return "TooFewDistributions";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::parse_error: return "ParseError";
    case Errc::schema_error: return "SchemaError";
    case Errc::bad_magic: return "BadMagic";
    case Errc::truncated_file: return "TruncatedFile";
    case Errc::label_count_mismatch: return "LabelCountMismatch";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::io_error: return "IoError";
    case Errc::too_few_samples: return "TooFewSamples";
    case Errc::bandwidth_not_resolved: return "BandwidthNotResolved";
    case Errc::non_positive_epsilon: return "NonPositiveEpsilon";
    case Errc::negative_sigma: return "NegativeSigma";
    case Errc::tau_out_of_range: return "TauOutOfRange";
    case Errc::all_entries_uncomputed: return "AllEntriesUncomputed";
    case Errc::isolated_node: return "IsolatedNode";
    case Errc::invalid_theta: return "InvalidTheta";
    case Errc::vacuous_bound: return "VacuousBound";
    case Errc::zero_gap: return "ZeroGap";
    case Errc::not_orthonormal: return "NotOrthonormal";
    case Errc::missing_diagnostics: return "MissingDiagnostics";
    case Errc::solver_failure: return "SolverFailure";
    case Errc::not_converged: return "NotConverged";
    case Errc::convergence_failure: return "ConvergenceFailure";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. The message is prefixed with
/// the code name, e.g. "NegativeWeight: weight[3] = -0.1".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same code, message prefixed with where it happened.
  Error with_context(const std::string& context) const { return Error(code_, context + ": " + detail_); }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace ddsc
