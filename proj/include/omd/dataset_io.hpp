#pragma once

#include <string>

#include "omd/synthetic.hpp"

namespace omd {

// Split file layout, little-endian: magic "OMDS", version u32, JSON metadata
// (u64 byte length + UTF-8 bytes), then row-major f64 inputs, u32 labels,
// i64 sample_ids.
inline constexpr std::uint32_t kOmdsVersion = 1;

// Parse a DatasetSpec from a JSON document (the gen-data --spec format).
DatasetSpec spec_from_json(const std::string& json_text);
std::string spec_to_json_text(const DatasetSpec& spec);

void write_split(const std::string& path, const Split& split, const DatasetSpec& spec,
                 const std::string& split_name);
Split read_split(const std::string& path);

// Full dataset: one .omds file per split plus dataset.json carrying the spec
// and generator state (embeddings, context assignment, motion map,
// prototypes) needed to rebuild the classifier and oracles.
void export_dataset(const SyntheticDataset& dataset, const std::string& dir);
SyntheticDataset import_dataset(const std::string& dir);

}  // namespace omd
