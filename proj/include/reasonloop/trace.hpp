#pragma once

#include <string>

#include "reasonloop/core_types.hpp"

namespace reasonloop {

// Serializes a session as JSONL: a header line
//   {"version":"reasonloop/1","session_id":...,"policy":{...}}
// followed by one line per event (think, edit, describe, assess, conclude,
// score, stop) with deterministic field ordering. Scores are rendered as
// 4-fractional-digit decimal strings so golden files are bit-stable.
// Throws ValidationError (with field path) if the session violates an
// invariant.
std::string serialize_trace(const EditSession& session);

// Inverse of serialize_trace. Throws TraceParseError with the offending line
// number on malformed input and UnsupportedVersionError on version mismatch.
EditSession parse_trace(const std::string& bytes);

}  // namespace reasonloop
