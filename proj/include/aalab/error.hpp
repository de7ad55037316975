#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aalab {

enum class ErrorKind {
  BoundaryProximity,
  DomainExit,
  NonConvergence,
  OrderExhausted,
  PullbackResidual,
  EmptyDomain,
  StencilOverflow,
  IncompatibleRange,
  SequenceTooShort,
  BudgetViolation,
  RankDeficiency,
  Domain,
  VerticalTangent,
  AmbientExit,
  ParameterExit,
  HypothesisViolation,
  SingularFrame,
  DomainOverflow,
  BudgetExceeded,
  EmptyOverlap,
  NotTotallyBounded,
  RadiusStarvation,
  UnmatchedChart,
  FixtureNotFound,
  ParamOutOfRange,
  InvalidFixture,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::BoundaryProximity: return "boundary-proximity";
    case ErrorKind::DomainExit: return "domain-exit";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::OrderExhausted: return "order-exhausted";
    case ErrorKind::PullbackResidual: return "pullback-residual";
    case ErrorKind::EmptyDomain: return "empty-domain";
    case ErrorKind::StencilOverflow: return "stencil-overflow";
    case ErrorKind::IncompatibleRange: return "incompatible-range";
    case ErrorKind::SequenceTooShort: return "sequence-too-short";
    case ErrorKind::BudgetViolation: return "budget-violation";
    case ErrorKind::RankDeficiency: return "rank-deficiency";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::VerticalTangent: return "vertical-tangent";
    case ErrorKind::AmbientExit: return "ambient-exit";
    case ErrorKind::ParameterExit: return "parameter-exit";
    case ErrorKind::HypothesisViolation: return "hypothesis-violation";
    case ErrorKind::SingularFrame: return "singular-frame";
    case ErrorKind::DomainOverflow: return "domain-overflow";
    case ErrorKind::BudgetExceeded: return "budget-exceeded";
    case ErrorKind::EmptyOverlap: return "empty-overlap";
    case ErrorKind::NotTotallyBounded: return "not-totally-bounded";
    case ErrorKind::RadiusStarvation: return "radius-starvation";
    case ErrorKind::UnmatchedChart: return "unmatched-chart";
    case ErrorKind::FixtureNotFound: return "fixture-not-found";
    case ErrorKind::ParamOutOfRange: return "param-out-of-range";
    case ErrorKind::InvalidFixture: return "invalid-fixture";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind so
/// callers (and the scenario runner) can turn it into a structured row.
class LabError : public std::runtime_error {
 public:
  LabError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw LabError(kind, what); }

}  // namespace aalab
