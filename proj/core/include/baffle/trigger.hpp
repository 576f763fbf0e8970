#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "baffle/dataset.hpp"

namespace baffle {

enum class TriggerKind : std::uint8_t { VectorDims = 0, ImagePatch = 1 };

/// The observation perturbation that activates a backdoor: either fixed
/// values written onto designated vector dimensions, or a square patch
/// painted onto an image. Built for one specific observation layout.
struct TriggerSpec {
  struct DimValue {
    std::uint32_t index = 0;
    float value = 0.0f;
    /// Interquartile range of this dimension in the source dataset; scales
    /// gaussian trigger noise during evaluation.
    double iqr = 0.0;

    bool operator==(const DimValue&) const = default;
  };

  TriggerKind kind = TriggerKind::VectorDims;
  ObsLayout layout;
  std::vector<DimValue> dims;  // VectorDims
  int patch_row = 0;           // ImagePatch
  int patch_col = 0;
  int patch_height = 0;
  int patch_width = 0;
  float patch_fill = 1.0f;

  bool operator==(const TriggerSpec&) const = default;
  void validate() const;
};

/// Per-dimension trigger value = median (interpolated q = 0.5) of that
/// dimension over every observation in the dataset.
TriggerSpec make_vector_trigger(const Dataset& dataset,
                                const std::vector<std::uint32_t>& dims);

/// White square of the given side length at the top-left corner (fill 1.0,
/// all channels).
TriggerSpec make_patch_trigger(const ObsLayout& layout, int size);

/// Returns a copy of obs with the trigger written in (designated dims or
/// patch region overwritten; everything else untouched). Idempotent.
Observation apply_trigger(const Observation& obs, const TriggerSpec& trigger);

/// Counts how many observation entries the trigger overwrites.
std::size_t trigger_footprint(const TriggerSpec& trigger);

void save_trigger(const TriggerSpec& trigger, const std::filesystem::path& path);
TriggerSpec load_trigger(const std::filesystem::path& path);

/// JSON round-trip helpers used by the manifest format.
std::string trigger_to_json(const TriggerSpec& trigger);
TriggerSpec trigger_from_json(const std::string& json);

}  // namespace baffle
