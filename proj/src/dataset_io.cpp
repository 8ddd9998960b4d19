#include "omd/dataset_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace omd {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kMagic[4] = {'O', 'M', 'D', 'S'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("omds: truncated file");
    return v;
}

std::string ooc_mode_name(OocMode m) { return m == OocMode::Resample ? "resample" : "swap"; }

OocMode ooc_mode_from(const std::string& s) {
    if (s == "resample") return OocMode::Resample;
    if (s == "swap") return OocMode::Swap;
    throw std::runtime_error("dataset: unknown ooc_mode '" + s + "'");
}

json spec_to_json(const DatasetSpec& spec) {
    return json{{"k_base", spec.k_base},
                {"k_novel", spec.k_novel},
                {"d_embed", spec.d_embed},
                {"d_motion", spec.d_motion},
                {"d_static", spec.d_static},
                {"n_contexts", spec.n_contexts},
                {"bias_rho", spec.bias_rho},
                {"noise_sigma", spec.noise_sigma},
                {"samples_per_class_train", spec.samples_per_class_train},
                {"samples_per_class_test", spec.samples_per_class_test},
                {"seed", spec.seed},
                {"ooc_mode", ooc_mode_name(spec.ooc_mode)}};
}

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw std::runtime_error("dataset: matrix size mismatch");
    return m;
}

}  // namespace

DatasetSpec spec_from_json_obj(const json& j) {
    DatasetSpec spec;
    spec.k_base = j.at("k_base").get<std::size_t>();
    spec.k_novel = j.at("k_novel").get<std::size_t>();
    spec.d_embed = j.at("d_embed").get<std::size_t>();
    spec.d_motion = j.at("d_motion").get<std::size_t>();
    spec.d_static = j.at("d_static").get<std::size_t>();
    spec.n_contexts = j.at("n_contexts").get<std::size_t>();
    spec.bias_rho = j.at("bias_rho").get<double>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.samples_per_class_train = j.at("samples_per_class_train").get<std::size_t>();
    spec.samples_per_class_test = j.at("samples_per_class_test").get<std::size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.ooc_mode = j.contains("ooc_mode") ? ooc_mode_from(j.at("ooc_mode").get<std::string>())
                                           : OocMode::Resample;
    spec.validate();
    return spec;
}

DatasetSpec spec_from_json(const std::string& json_text) {
    return spec_from_json_obj(json::parse(json_text));
}

std::string spec_to_json_text(const DatasetSpec& spec) { return spec_to_json(spec).dump(2); }

void write_split(const std::string& path, const Split& split, const DatasetSpec& spec,
                 const std::string& split_name) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("omds: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kOmdsVersion);

    json meta{{"split", split_name},
              {"rows", split.size()},
              {"d_x", split.inputs.cols},
              {"seed", spec.seed},
              {"num_classes", spec.num_classes()},
              {"contexts", split.contexts}};
    std::string meta_str = meta.dump();
    write_pod<std::uint64_t>(os, meta_str.size());
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    os.write(reinterpret_cast<const char*>(split.inputs.data.data()),
             static_cast<std::streamsize>(split.inputs.data.size() * sizeof(double)));
    for (std::size_t l : split.labels) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l));
    for (std::int64_t id : split.sample_ids) write_pod<std::int64_t>(os, id);
    if (!os) throw std::runtime_error("omds: write failed for " + path);
}

Split read_split(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("omds: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("omds: bad magic in " + path);
    auto version = read_pod<std::uint32_t>(is);
    if (version != kOmdsVersion) throw std::runtime_error("omds: unsupported version in " + path);

    auto meta_len = read_pod<std::uint64_t>(is);
    std::string meta_str(meta_len, '\0');
    is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw std::runtime_error("omds: truncated metadata in " + path);
    json meta = json::parse(meta_str);

    Split split;
    std::size_t rows = meta.at("rows").get<std::size_t>();
    std::size_t d_x = meta.at("d_x").get<std::size_t>();
    split.inputs = Matrix(rows, d_x);
    is.read(reinterpret_cast<char*>(split.inputs.data.data()),
            static_cast<std::streamsize>(rows * d_x * sizeof(double)));
    split.labels.resize(rows);
    for (auto& l : split.labels) l = read_pod<std::uint32_t>(is);
    split.sample_ids.resize(rows);
    for (auto& id : split.sample_ids) id = read_pod<std::int64_t>(is);
    if (meta.contains("contexts")) split.contexts = meta.at("contexts").get<std::vector<std::size_t>>();
    return split;
}

void export_dataset(const SyntheticDataset& dataset, const std::string& dir) {
    fs::create_directories(dir);
    json doc{{"spec", spec_to_json(dataset.spec)},
             {"class_embeddings", matrix_to_json(dataset.class_embeddings)},
             {"class_context_assignment", dataset.class_context_assignment},
             {"motion_map", matrix_to_json(dataset.motion_map)},
             {"context_prototypes", matrix_to_json(dataset.context_prototypes)}};
    std::ofstream os(fs::path(dir) / "dataset.json");
    if (!os) throw std::runtime_error("dataset: cannot write dataset.json in " + dir);
    os << doc.dump(2) << "\n";

    for (const auto& [name, split] : dataset.splits)
        write_split((fs::path(dir) / (name + ".omds")).string(), split, dataset.spec, name);
}

SyntheticDataset import_dataset(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "dataset.json");
    if (!is) throw std::runtime_error("dataset: missing dataset.json in " + dir);
    json doc = json::parse(is);

    SyntheticDataset ds;
    ds.spec = spec_from_json_obj(doc.at("spec"));
    ds.class_embeddings = matrix_from_json(doc.at("class_embeddings"));
    ds.class_context_assignment =
        doc.at("class_context_assignment").get<std::vector<std::size_t>>();
    ds.motion_map = matrix_from_json(doc.at("motion_map"));
    ds.context_prototypes = matrix_from_json(doc.at("context_prototypes"));

    for (const auto& name : split_names()) {
        fs::path p = fs::path(dir) / (name + ".omds");
        if (fs::exists(p)) ds.splits[name] = read_split(p.string());
    }
    if (ds.splits.empty()) throw std::runtime_error("dataset: no .omds splits found in " + dir);
    return ds;
}

}  // namespace omd
