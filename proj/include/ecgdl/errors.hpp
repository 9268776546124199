#pragma once

#include <stdexcept>
#include <string>

namespace ecgdl {

#define ECGDL_DEFINE_ERROR(Name)                          \
    struct Name : std::runtime_error {                    \
        using std::runtime_error::runtime_error;          \
    }

// wfdb
ECGDL_DEFINE_ERROR(ParseError);
ECGDL_DEFINE_ERROR(UnsupportedFormat);
ECGDL_DEFINE_ERROR(InconsistentHeader);
ECGDL_DEFINE_ERROR(TruncatedSignal);
ECGDL_DEFINE_ERROR(EmptyRecord);
ECGDL_DEFINE_ERROR(SchemaError);
ECGDL_DEFINE_ERROR(DuplicateRecord);

// dsp
ECGDL_DEFINE_ERROR(DesignError);
ECGDL_DEFINE_ERROR(SignalTooShort);
ECGDL_DEFINE_ERROR(DecompositionError);
ECGDL_DEFINE_ERROR(ReconstructionError);
ECGDL_DEFINE_ERROR(InvalidWindow);

// labels
ECGDL_DEFINE_ERROR(UnknownCode);
ECGDL_DEFINE_ERROR(UnlabeledRecord);
ECGDL_DEFINE_ERROR(DegenerateDistribution);

// nn
ECGDL_DEFINE_ERROR(ShapeError);
ECGDL_DEFINE_ERROR(BatchTooSmall);
ECGDL_DEFINE_ERROR(StateError);

// model_format
ECGDL_DEFINE_ERROR(EncodeError);
ECGDL_DEFINE_ERROR(NotAModelFile);
ECGDL_DEFINE_ERROR(CorruptFile);
ECGDL_DEFINE_ERROR(UnsupportedVersion);

// eval
ECGDL_DEFINE_ERROR(EmptyEvaluation);

#undef ECGDL_DEFINE_ERROR

} // namespace ecgdl
