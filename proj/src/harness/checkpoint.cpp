#include "sevae/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "sevae/error.hpp"

namespace sevae {
namespace {

constexpr std::array<char, 8> kMagic = {'S', 'E', 'V', 'A', 'E', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::uint64_t bits = 0;
  if constexpr (sizeof(T) == 8) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw CheckpointError("truncated checkpoint");
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  get_bytes(in, reinterpret_cast<char*>(bytes), sizeof(T));
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

std::string spec_text(const ModelSpec& spec) {
  std::string s;
  for (const auto& [k, v] : spec.to_kv()) s += k + "=" + v + "\n";
  return s;
}

ModelSpec parse_spec_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed spec block in checkpoint");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  try {
    return ModelSpec::from_kv(kv);
  } catch (const UsageError& e) {
    throw CheckpointError(std::string("checkpoint spec: ") + e.what());
  }
}

struct Header {
  std::uint64_t hash = 0;
  std::string spec;
};

Header read_header(std::istream& in) {
  std::array<char, 8> magic{};
  get_bytes(in, magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Header h;
  h.hash = get<std::uint64_t>(in);
  const auto len = get<std::uint32_t>(in);
  h.spec.resize(len);
  get_bytes(in, h.spec.data(), len);
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return in;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model& model) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, model.spec().hash());
  const std::string spec = spec_text(model.spec());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
  out.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  const auto params = model.params().all();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name().size()));
    out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
    const Tensor& v = p->value();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.rank()));
    for (std::size_t d : v.shape()) put<std::uint64_t>(out, d);
    for (double x : v.values()) put<double>(out, x);
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model);
  out.flush();
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

ModelSpec read_checkpoint_spec(std::istream& in) {
  const Header h = read_header(in);
  ModelSpec spec = parse_spec_text(h.spec);
  if (spec.hash() != h.hash) throw CheckpointError("spec hash mismatch");
  return spec;
}

ModelSpec read_checkpoint_spec(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_checkpoint_spec(in);
}

void read_checkpoint_into(std::istream& in, Model& model) {
  const Header h = read_header(in);
  if (h.hash != model.spec().hash()) throw CheckpointError("spec hash mismatch");
  const auto count = get<std::uint32_t>(in);
  // Decode everything before touching the model so a bad file leaves it intact.
  std::vector<std::pair<Parameter*, Tensor>> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    get_bytes(in, name.data(), name.size());
    Parameter* p = model.params().find(name);
    if (p == nullptr) throw CheckpointError("checkpoint has unknown parameter '" + name + "'");
    Shape shape(get<std::uint32_t>(in));
    for (std::size_t& d : shape) d = get<std::uint64_t>(in);
    if (shape != p->value().shape()) {
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint " + shape_string(shape) + ", model " +
                            shape_string(p->value().shape()));
    }
    std::vector<double> values(p->value().size());
    for (double& x : values) x = get<double>(in);
    loaded.emplace_back(p, Tensor(shape, std::move(values)));
  }
  if (loaded.size() != model.params().size()) throw CheckpointError("checkpoint is missing parameters");
  for (auto& [p, t] : loaded) p->value() = std::move(t);
}

void load_checkpoint_into(const std::filesystem::path& path, Model& model) {
  std::ifstream in = open_in(path);
  read_checkpoint_into(in, model);
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  const ModelSpec spec = read_checkpoint_spec(path);
  LabelProbs uniform;
  uniform.fill(1.0 / static_cast<double>(kNumLabels));
  auto model = make_model(spec, 0, uniform);
  load_checkpoint_into(path, *model);
  return model;
}

}  // namespace sevae
