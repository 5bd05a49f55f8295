#pragma once

#include <stdexcept>
#include <string>

namespace sfqi {

enum class ErrorKind {
  Schema,              // malformed manifest/record layout
  Dimension,           // inconsistent vector/matrix dimensions
  BoundViolation,      // reward outside the declared bound
  RaggedTrajectory,    // trajectories of unequal length
  InsufficientData,    // fewer samples than an estimator requires
  Asymmetric,          // eigendecomposition input not symmetric
  RankDeficient,       // eigenvalue below the rank tolerance
  DegenerateSpectrum,  // no positive eigenvalues
  Divergence,          // non-finite training loss
  Coverage,            // an action never observed in the data
  Config,              // invalid or incomplete configuration
  Pairing,             // paired reports with mismatched seed lists
  Io,                  // file missing or unwritable
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::BoundViolation: return "bound-violation";
    case ErrorKind::RaggedTrajectory: return "ragged-trajectory";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Asymmetric: return "asymmetric";
    case ErrorKind::RankDeficient: return "rank-deficient";
    case ErrorKind::DegenerateSpectrum: return "degenerate-spectrum";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Coverage: return "coverage";
    case ErrorKind::Config: return "config";
    case ErrorKind::Pairing: return "pairing";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace sfqi
