#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace vbody {

// Base error carrying a stable category tag. The CLI prints errors as
//   vbody: error: <category>: <message>
// so the category string is part of the machine-parseable surface.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define VBODY_DEFINE_ERROR(NAME, CATEGORY)                                 \
    class NAME : public Error {                                            \
    public:                                                                \
        explicit NAME(const std::string& what) : Error(CATEGORY, what) {}  \
    };

VBODY_DEFINE_ERROR(ShapeError, "shape")
VBODY_DEFINE_ERROR(FormatError, "format")
VBODY_DEFINE_ERROR(ParameterError, "parameter")
VBODY_DEFINE_ERROR(UnitError, "unit")
VBODY_DEFINE_ERROR(MappingError, "mapping")
VBODY_DEFINE_ERROR(SizeError, "size")
VBODY_DEFINE_ERROR(SamplingError, "sampling")
VBODY_DEFINE_ERROR(CoverageError, "coverage")
VBODY_DEFINE_ERROR(PartitionError, "partition")
VBODY_DEFINE_ERROR(NumericError, "numeric")
VBODY_DEFINE_ERROR(CheckpointError, "checkpoint")
VBODY_DEFINE_ERROR(ConfigError, "config")
VBODY_DEFINE_ERROR(OrchestrationError, "orchestration")
VBODY_DEFINE_ERROR(RegionError, "region")
VBODY_DEFINE_ERROR(PairingError, "pairing")
VBODY_DEFINE_ERROR(ReportError, "report")
VBODY_DEFINE_ERROR(IoError, "io")

#undef VBODY_DEFINE_ERROR

}  // namespace vbody
