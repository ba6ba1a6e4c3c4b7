#include "csm/checkpoint.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace csm {

using nlohmann::json;

namespace {

json model_config_to_json(const ModelConfig& m) {
  json j;
  j["d_enc"] = m.d_enc;
  j["d_dec"] = m.d_dec;
  j["enc_depth"] = m.enc_depth;
  j["dec_depth"] = m.dec_depth;
  j["enc_heads"] = m.enc_heads;
  j["dec_heads"] = m.dec_heads;
  j["patch_edge"] = m.patch_edge;
  j["s_max"] = m.s_max;
  j["n_max"] = m.n_max;
  j["dropout"] = m.dropout;
  j["ln_eps"] = m.ln_eps;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.d_enc = j.at("d_enc").get<int>();
  m.d_dec = j.at("d_dec").get<int>();
  m.enc_depth = j.at("enc_depth").get<int>();
  m.dec_depth = j.at("dec_depth").get<int>();
  m.enc_heads = j.at("enc_heads").get<int>();
  m.dec_heads = j.at("dec_heads").get<int>();
  m.patch_edge = j.at("patch_edge").get<int>();
  m.s_max = j.at("s_max").get<int>();
  m.n_max = j.at("n_max").get<int>();
  m.dropout = j.at("dropout").get<bool>();
  m.ln_eps = j.at("ln_eps").get<double>();
  return m;
}

void write_blob(std::ofstream& out, const TensorF& t) {
  out.write(reinterpret_cast<const char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<Parameter<float>*>& params,
                     const AdamState<float>* adam) {
  json header;
  header["format"] = "csm-checkpoint";
  header["version"] = meta.version;
  header["task"] = meta.task;
  header["model"] = model_config_to_json(meta.model);
  header["seed"] = meta.seed;
  header["step"] = meta.step;
  header["config_hash"] = meta.config_hash;
  header["adam_t"] = adam ? adam->t : int64_t{-1};

  json blobs = json::array();
  auto describe = [&blobs](const std::string& name, const TensorF& t) {
    json b;
    b["name"] = name;
    b["shape"] = t.shape;
    blobs.push_back(std::move(b));
  };
  for (const auto* p : params) describe(p->name, p->value);
  if (adam) {
    if (adam->m.size() != params.size())
      throw UsageError("save_checkpoint: optimizer state does not match parameters");
    for (size_t i = 0; i < params.size(); ++i) describe("adam.m:" + params[i]->name, adam->m[i]);
    for (size_t i = 0; i < params.size(); ++i) describe("adam.v:" + params[i]->name, adam->v[i]);
  }
  header["blobs"] = std::move(blobs);

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out << header.dump() << "\n";
  for (const auto* p : params) write_blob(out, p->value);
  if (adam) {
    for (const auto& t : adam->m) write_blob(out, t);
    for (const auto& t : adam->v) write_blob(out, t);
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

const TensorF& LoadedCheckpoint::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs)
    if (n == name) return t;
  throw IoError("checkpoint: missing blob " + name);
}

bool LoadedCheckpoint::has_blob(const std::string& name) const {
  for (const auto& [n, t] : blobs)
    if (n == name) return true;
  return false;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw MalformedHeaderError("load_checkpoint: missing header in " + path.string());
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded())
    throw MalformedHeaderError("load_checkpoint: header is not valid JSON in " + path.string());

  LoadedCheckpoint out;
  try {
    if (header.at("format").get<std::string>() != "csm-checkpoint")
      throw MalformedHeaderError("load_checkpoint: not a checkpoint file: " + path.string());
    out.meta.version = header.at("version").get<int>();
    if (out.meta.version != 1)
      throw MalformedHeaderError("load_checkpoint: unsupported version in " + path.string());
    out.meta.task = header.at("task").get<std::string>();
    out.meta.model = model_config_from_json(header.at("model"));
    out.meta.seed = header.at("seed").get<uint64_t>();
    out.meta.step = header.at("step").get<int64_t>();
    out.meta.config_hash = header.at("config_hash").get<std::string>();
    out.meta.adam_t = header.at("adam_t").get<int64_t>();
    for (const auto& b : header.at("blobs")) {
      const std::string name = b.at("name").get<std::string>();
      const auto shape = b.at("shape").get<std::vector<int64_t>>();
      TensorF t(shape);
      in.read(reinterpret_cast<char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
      if (in.gcount() != static_cast<std::streamsize>(t.values.size() * sizeof(float)))
        throw TruncatedPayloadError("load_checkpoint: blob " + name + " truncated in " +
                                    path.string());
      out.blobs.emplace_back(name, std::move(t));
    }
  } catch (const json::exception& e) {
    throw MalformedHeaderError("load_checkpoint: bad header field in " + path.string() + ": " +
                               e.what());
  }
  in.peek();
  if (!in.eof())
    throw PayloadSizeMismatchError("load_checkpoint: trailing bytes in " + path.string());
  return out;
}

void apply_checkpoint_strict(const LoadedCheckpoint& ckpt,
                             const std::vector<Parameter<float>*>& params,
                             AdamState<float>* adam) {
  // Optimizer moments are derivable names; they are required when resuming
  // (adam != null) and permitted-but-ignored otherwise. Everything else must
  // match the parameter set exactly.
  std::set<std::string> required, optional;
  for (const auto* p : params) {
    required.insert(p->name);
    (adam ? required : optional).insert("adam.m:" + p->name);
    (adam ? required : optional).insert("adam.v:" + p->name);
  }
  std::set<std::string> present;
  for (const auto& [name, t] : ckpt.blobs) present.insert(name);
  for (const auto& name : present)
    if (!required.count(name) && !optional.count(name))
      throw IoError("checkpoint: unexpected blob '" + name + "' (strict load)");
  for (const auto& name : required)
    if (!present.count(name)) throw IoError("checkpoint: missing blob '" + name + "' (strict load)");

  for (auto* p : params) {
    const TensorF& t = ckpt.blob(p->name);
    if (t.shape != p->value.shape)
      throw IoError("checkpoint: shape mismatch for " + p->name + ": file " +
                    shape_str(t.shape) + " vs model " + shape_str(p->value.shape));
    p->value = t;
    p->zero_grad();
  }
  if (adam) {
    adam->t = ckpt.meta.adam_t;
    adam->m.clear();
    adam->v.clear();
    for (const auto* p : params) adam->m.push_back(ckpt.blob("adam.m:" + p->name));
    for (const auto* p : params) adam->v.push_back(ckpt.blob("adam.v:" + p->name));
  }
}

}  // namespace csm
