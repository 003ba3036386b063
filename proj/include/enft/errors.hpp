#pragma once

#include <stdexcept>
#include <string>

namespace enft {

// Base for everything thrown by this library, so callers can catch one type
// at the boundary and still branch on the specific failure when they care.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ENFT_DEFINE_ERROR(Name)                                 \
    struct Name : Error {                                       \
        explicit Name(const std::string& msg) : Error(msg) {}   \
    }

// audio file handling
ENFT_DEFINE_ERROR(MalformedWav);
ENFT_DEFINE_ERROR(UnsupportedFormat);
ENFT_DEFINE_ERROR(IoFailure);

// rate conversion / filtering
ENFT_DEFINE_ERROR(InvalidRate);
ENFT_DEFINE_ERROR(InvalidBand);

// framing and phase estimation
ENFT_DEFINE_ERROR(TooShort);
ENFT_DEFINE_ERROR(NoPeak);
ENFT_DEFINE_ERROR(DegeneratePeak);
ENFT_DEFINE_ERROR(InterpolationFailure);

// tensors / network
ENFT_DEFINE_ERROR(ShapeMismatch);
ENFT_DEFINE_ERROR(ConfigError);
ENFT_DEFINE_ERROR(DataError);
ENFT_DEFINE_ERROR(VersionMismatch);
ENFT_DEFINE_ERROR(CorruptWeights);

// synthesis
ENFT_DEFINE_ERROR(InvalidParams);
ENFT_DEFINE_ERROR(OutOfBounds);
ENFT_DEFINE_ERROR(MissingDonor);

#undef ENFT_DEFINE_ERROR

}  // namespace enft
