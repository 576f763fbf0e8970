#include "baffle/trigger.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"

namespace baffle {

void TriggerSpec::validate() const {
  if (kind == TriggerKind::VectorDims) {
    if (layout.kind != ObsKind::Vector) {
      throw UsageError("vector trigger requires a vector layout");
    }
    for (const DimValue& dv : dims) {
      if (dv.index >= layout.size()) {
        throw UsageError("trigger dim " + std::to_string(dv.index) +
                         " outside layout of size " +
                         std::to_string(layout.size()));
      }
    }
    return;
  }
  if (layout.kind != ObsKind::Image) {
    throw UsageError("patch trigger requires an image layout");
  }
  if (patch_height < 0 || patch_width < 0 || patch_row < 0 || patch_col < 0 ||
      patch_row + patch_height > static_cast<int>(layout.dims[0]) ||
      patch_col + patch_width > static_cast<int>(layout.dims[1])) {
    throw UsageError("patch exceeds image bounds");
  }
  if (patch_fill < 0.0f || patch_fill > 1.0f) {
    throw UsageError("patch fill must lie in [0, 1]");
  }
}

TriggerSpec make_vector_trigger(const Dataset& dataset,
                                const std::vector<std::uint32_t>& dims) {
  if (dataset.header.obs_layout.kind != ObsKind::Vector) {
    throw UsageError("make_vector_trigger: dataset has image observations");
  }
  if (dataset.records.empty()) {
    throw UsageError("make_vector_trigger: empty dataset");
  }
  TriggerSpec trigger;
  trigger.kind = TriggerKind::VectorDims;
  trigger.layout = dataset.header.obs_layout;
  for (std::uint32_t dim : dims) {
    TriggerSpec::DimValue dv;
    dv.index = dim;
    dv.value = static_cast<float>(obs_dim_quantile(dataset, dim, 0.5));
    dv.iqr = obs_dim_quantile(dataset, dim, 0.75) -
             obs_dim_quantile(dataset, dim, 0.25);
    trigger.dims.push_back(dv);
  }
  trigger.validate();
  return trigger;
}

TriggerSpec make_patch_trigger(const ObsLayout& layout, int size) {
  if (layout.kind != ObsKind::Image) {
    throw UsageError("make_patch_trigger: layout is not an image");
  }
  TriggerSpec trigger;
  trigger.kind = TriggerKind::ImagePatch;
  trigger.layout = layout;
  trigger.patch_row = 0;
  trigger.patch_col = 0;
  trigger.patch_height = size;
  trigger.patch_width = size;
  trigger.patch_fill = 1.0f;
  trigger.validate();
  return trigger;
}

Observation apply_trigger(const Observation& obs, const TriggerSpec& trigger) {
  trigger.validate();
  if (obs.size() != trigger.layout.size()) {
    throw UsageError("apply_trigger: observation does not match trigger layout");
  }
  Observation out = obs;
  if (trigger.kind == TriggerKind::VectorDims) {
    for (const TriggerSpec::DimValue& dv : trigger.dims) {
      out[dv.index] = dv.value;
    }
    return out;
  }
  const int w = static_cast<int>(trigger.layout.dims[1]);
  const int c = static_cast<int>(trigger.layout.dims[2]);
  for (int r = trigger.patch_row; r < trigger.patch_row + trigger.patch_height; ++r) {
    for (int col = trigger.patch_col; col < trigger.patch_col + trigger.patch_width; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        out[(static_cast<std::size_t>(r) * w + col) * c + ch] = trigger.patch_fill;
      }
    }
  }
  return out;
}

std::size_t trigger_footprint(const TriggerSpec& trigger) {
  if (trigger.kind == TriggerKind::VectorDims) return trigger.dims.size();
  return static_cast<std::size_t>(trigger.patch_height) * trigger.patch_width *
         trigger.layout.dims[2];
}

namespace {

nlohmann::ordered_json layout_to_json(const ObsLayout& layout) {
  nlohmann::ordered_json j;
  j["kind"] = layout.kind == ObsKind::Vector ? "vector" : "image";
  j["dims"] = layout.dims;
  return j;
}

ObsLayout layout_from_json(const nlohmann::json& j) {
  ObsLayout layout;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "vector") {
    layout.kind = ObsKind::Vector;
  } else if (kind == "image") {
    layout.kind = ObsKind::Image;
  } else {
    throw FormatError("unknown layout kind: " + kind);
  }
  const auto dims = j.at("dims").get<std::vector<std::uint32_t>>();
  if (dims.size() != 3) throw FormatError("layout dims must have 3 entries");
  std::copy(dims.begin(), dims.end(), layout.dims.begin());
  return layout;
}

nlohmann::ordered_json trigger_json(const TriggerSpec& trigger) {
  nlohmann::ordered_json j;
  j["layout"] = layout_to_json(trigger.layout);
  if (trigger.kind == TriggerKind::VectorDims) {
    j["kind"] = "vector_dims";
    auto& arr = j["dims"] = nlohmann::ordered_json::array();
    for (const auto& dv : trigger.dims) {
      arr.push_back({{"index", dv.index}, {"value", dv.value}, {"iqr", dv.iqr}});
    }
  } else {
    j["kind"] = "image_patch";
    j["row"] = trigger.patch_row;
    j["col"] = trigger.patch_col;
    j["height"] = trigger.patch_height;
    j["width"] = trigger.patch_width;
    j["fill"] = trigger.patch_fill;
  }
  return j;
}

TriggerSpec trigger_from(const nlohmann::json& j) {
  TriggerSpec trigger;
  trigger.layout = layout_from_json(j.at("layout"));
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "vector_dims") {
    trigger.kind = TriggerKind::VectorDims;
    for (const auto& e : j.at("dims")) {
      TriggerSpec::DimValue dv;
      dv.index = e.at("index").get<std::uint32_t>();
      dv.value = e.at("value").get<float>();
      dv.iqr = e.value("iqr", 0.0);
      trigger.dims.push_back(dv);
    }
  } else if (kind == "image_patch") {
    trigger.kind = TriggerKind::ImagePatch;
    trigger.patch_row = j.at("row").get<int>();
    trigger.patch_col = j.at("col").get<int>();
    trigger.patch_height = j.at("height").get<int>();
    trigger.patch_width = j.at("width").get<int>();
    trigger.patch_fill = j.at("fill").get<float>();
  } else {
    throw FormatError("unknown trigger kind: " + kind);
  }
  trigger.validate();
  return trigger;
}

}  // namespace

void save_trigger(const TriggerSpec& trigger, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write trigger: " + path.string());
  out << trigger_json(trigger).dump(2) << '\n';
}

TriggerSpec load_trigger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trigger: " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return trigger_from(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad trigger json " + path.string() + ": " + e.what());
  }
}

std::string trigger_to_json(const TriggerSpec& trigger) {
  return trigger_json(trigger).dump();
}

TriggerSpec trigger_from_json(const std::string& json) {
  try {
    return trigger_from(nlohmann::json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad trigger json: ") + e.what());
  }
}

}  // namespace baffle
