#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "reasonloop/backends.hpp"

namespace reasonloop {

// Offline stand-in for a real editor + judge pair. The generator tracks
// hidden flaws per generated image; the coupled reasoner answers the
// think/describe/assess/conclude/score prompts from that hidden state:
//
//   - a fresh edit introduces one flaw with probability flaw_probability
//   - a refinement instruction naming a flaw ("flaw-<hex>") removes it with
//     probability correction_probability
//   - quality = clamp(base_quality - 3*#flaws + N(0, noise_sd), 0, 10) on
//     both VIEScore axes
//   - flaws created by a generator with correction_probability == 0 are
//     irrecoverable: the reasoner concludes #Failed for such images
//
// Every random draw is a pure function of (world seed, image id), so the
// whole world is deterministic regardless of call interleaving.
class SimulatedWorld : public std::enable_shared_from_this<SimulatedWorld> {
 public:
  struct Flaw {
    std::string name;  // "flaw-<8 hex>"
    bool irrecoverable = false;
    bool operator==(const Flaw&) const = default;
  };

  static std::shared_ptr<SimulatedWorld> create(const WorldConfig& config,
                                                std::int64_t seed);

  std::shared_ptr<ReasonerBackend> reasoner();
  std::shared_ptr<GeneratorBackend> generator();
  // A generator sharing this world's hidden state but with its own flaw /
  // correction behavior (used to mix editors in the data forge).
  std::shared_ptr<GeneratorBackend> generator_with(const WorldConfig& config);

  std::int64_t seed() const { return seed_; }
  const WorldConfig& config() const { return config_; }

  // Hidden flaw state for an image id (empty for unknown images).
  std::vector<Flaw> flaws_of(const std::string& image_id) const;

  // --- pure derivations, shared with the Monte-Carlo oracle in tests ---
  static std::string derive_image_id(const std::string& reference_sha,
                                     const std::string& instruction_text,
                                     std::int64_t edit_seed);
  static std::string image_sha(const std::string& image_id);
  double flaw_draw(const std::string& image_id) const;        // uniform [0,1)
  double correction_draw(const std::string& image_id) const;  // uniform [0,1)
  double noise_draw(const std::string& image_id) const;       // N(0, sd)
  double quality_of(size_t flaw_count, const std::string& image_id) const;

  // Parses "flaw-<8 hex>" out of an instruction, empty if absent.
  static std::string refinement_target(const std::string& instruction_text);

 private:
  SimulatedWorld(const WorldConfig& config, std::int64_t seed)
      : config_(config), seed_(seed) {}

  friend class SimulatedGenerator;
  friend class SimulatedReasoner;

  WorldConfig config_;
  std::int64_t seed_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<Flaw>> state_;
};

// Convenience matching the spec surface: one coupled (reasoner, generator)
// pair over a fresh world.
std::pair<std::shared_ptr<ReasonerBackend>, std::shared_ptr<GeneratorBackend>>
simulated_world(const WorldConfig& config, std::int64_t seed);

}  // namespace reasonloop
