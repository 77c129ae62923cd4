#pragma once

#include "distillkit/config.hpp"
#include "distillkit/seq2seq.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dk {

inline constexpr int kCheckpointFormatVersion = 1;

/// One named parameter as stored on disk.
struct ParameterBlob {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::vector<float> values;  // row-major
};

/// Scalar-agnostic checkpoint contents.
struct CheckpointData {
  ModelConfig config;
  std::map<std::string, std::string> metadata;  // extra key=value lines
  std::vector<ParameterBlob> parameters;
};

/// Text header of key=value lines (magic, format_version, endianness, config
/// fields, metadata, one `param=name,rows,cols,offset` line per blob) closed by
/// `end_header`, then the little-endian float32 blobs. Written atomically.
void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path);
CheckpointData read_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
CheckpointData to_checkpoint(const Seq2SeqModel<Scalar>& model) {
  CheckpointData data;
  data.config = model.config;
  model.visit_parameters([&](const std::string& name, const Tensor<Scalar>& t) {
    ParameterBlob blob{name, t.rows(), t.cols(), {}};
    blob.values.resize(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) blob.values[static_cast<std::size_t>(i)] = static_cast<float>(t.value().data()[i]);
    data.parameters.push_back(std::move(blob));
  });
  return data;
}

/// Rebuilds a model; names and shapes must match the config's layout.
template <typename Scalar>
Seq2SeqModel<Scalar> from_checkpoint(const CheckpointData& data) {
  Seq2SeqModel<Scalar> m = make_model<Scalar>(data.config, 0);
  std::size_t i = 0;
  m.visit_parameters([&](const std::string& name, Tensor<Scalar>& t) {
    if (i >= data.parameters.size()) throw std::runtime_error("checkpoint: missing parameter " + name);
    const ParameterBlob& blob = data.parameters[i++];
    if (blob.name != name || blob.rows != t.rows() || blob.cols != t.cols()) {
      throw std::runtime_error("checkpoint: parameter " + blob.name + " does not match " + name);
    }
    for (Index k = 0; k < t.size(); ++k) t.value().data()[k] = static_cast<Scalar>(blob.values[static_cast<std::size_t>(k)]);
  });
  if (i != data.parameters.size()) throw std::runtime_error("checkpoint: unexpected extra parameters");
  return m;
}

template <typename Scalar>
void save_model(const Seq2SeqModel<Scalar>& model, const std::filesystem::path& path,
                const std::map<std::string, std::string>& metadata = {}) {
  CheckpointData data = to_checkpoint(model);
  data.metadata = metadata;
  write_checkpoint(data, path);
}

template <typename Scalar>
Seq2SeqModel<Scalar> load_model(const std::filesystem::path& path) {
  return from_checkpoint<Scalar>(read_checkpoint(path));
}

}  // namespace dk
