#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace reasonloop {

// SHA-256 of `bytes`, lowercase hex.
std::string sha256_hex(const std::string& bytes);

// Stable 64-bit mix of (seed, parts...). Used for all derived randomness in
// the offline mocks so that every draw is a pure function of its inputs.
std::uint64_t mix_hash(std::uint64_t seed, const std::string& a,
                       const std::string& b = "", const std::string& c = "");

// Uniform double in [0, 1) derived from a 64-bit hash.
double hash_uniform(std::uint64_t h);

// Standard normal draw derived from a 64-bit hash (Box-Muller).
double hash_normal(std::uint64_t h);

std::string to_hex16(std::uint64_t v);

// Fixed 4-fractional-digit decimal rendering; used for every score stored in
// a trace so golden files are bit-stable.
std::string fmt4(double v);
double round4(double v);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

// UUIDv4-shaped id with random bits drawn from `seed`; replayable runs need
// session ids derived from the seed rather than an entropy source.
std::string uuid_from_seed(std::uint64_t seed);

std::string trim(const std::string& s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// "png" / "jpeg" from magic bytes, nullopt otherwise.
std::optional<std::string> sniff_media_type(const std::string& bytes);

double clamp01_to(double v, double lo, double hi);

}  // namespace reasonloop
