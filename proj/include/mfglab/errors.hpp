#pragma once

#include <stdexcept>
#include <string>

namespace mfglab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define MFGLAB_ERROR(Name)                                   \
    class Name : public Error {                              \
    public:                                                  \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    };

MFGLAB_ERROR(ParameterError)
MFGLAB_ERROR(SingularOperator)
MFGLAB_ERROR(NonConvergence)
MFGLAB_ERROR(SupportViolation)
MFGLAB_ERROR(PositivityViolation)
MFGLAB_ERROR(AmplitudeInvalid)
MFGLAB_ERROR(RankDeficient)
MFGLAB_ERROR(FrequencyUnresolved)
MFGLAB_ERROR(PositivityFloor)
MFGLAB_ERROR(ConfigError)

#undef MFGLAB_ERROR

}  // namespace mfglab
