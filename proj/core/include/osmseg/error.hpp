#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace osmseg {

// Base for every error raised by the library. `kind()` is a stable
// machine-readable tag ("ShapeMismatch", "OutOfExtent", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define OSMSEG_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name, what) {}    \
  }

OSMSEG_DEFINE_ERROR(InvalidArgument);
OSMSEG_DEFINE_ERROR(OutOfExtent);
OSMSEG_DEFINE_ERROR(MalformedDocument);
OSMSEG_DEFINE_ERROR(DimensionMismatch);
OSMSEG_DEFINE_ERROR(GeorefMismatch);
OSMSEG_DEFINE_ERROR(TooFewPatches);
OSMSEG_DEFINE_ERROR(IoFailure);
OSMSEG_DEFINE_ERROR(FormatViolation);
OSMSEG_DEFINE_ERROR(ShapeMismatch);
OSMSEG_DEFINE_ERROR(OddSpatialDim);
OSMSEG_DEFINE_ERROR(NonFiniteInput);
OSMSEG_DEFINE_ERROR(NonFiniteGradient);
OSMSEG_DEFINE_ERROR(LabelOutOfRange);
OSMSEG_DEFINE_ERROR(IncompatibleInputSize);
OSMSEG_DEFINE_ERROR(SpecMismatch);
OSMSEG_DEFINE_ERROR(PlacementOverflow);
OSMSEG_DEFINE_ERROR(StageFailure);

#undef OSMSEG_DEFINE_ERROR

// Non-fatal finding attached to an entity (rejected way, skipped element,
// degenerate geometry). `code` is a short tag, `entity_id` 0 when unknown.
struct Diagnostic {
  std::string code;
  std::string message;
  long long entity_id = 0;

  bool operator==(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

}  // namespace osmseg
