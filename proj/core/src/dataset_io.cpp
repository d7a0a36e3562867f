#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "lano/error.hpp"
#include "lano/pdegen.hpp"
#include "lano/rng.hpp"

namespace lano {

namespace detail {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace detail

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

template <typename U>
U narrow_field(std::size_t v, const char* name) {
  if (v > std::numeric_limits<U>::max()) {
    throw ValueError(std::string("dataset: ") + name + " " + std::to_string(v) + " does not fit the file format");
  }
  return static_cast<U>(v);
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw FormatError("manifest: bad number '" + item + "'");
    }
  }
  return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, std::span<const Trajectory> trajectories) {
  detail::ByteWriter w;
  for (const auto& t : trajectories) {
    if (t.frames.size() != t.steps * t.frame_size()) {
      throw ShapeError("dataset: trajectory buffer holds " + std::to_string(t.frames.size()) +
                       " values, header implies " + std::to_string(t.steps * t.frame_size()));
    }
    w.bytes("POBD", 4);
    w.u32(kDatasetVersion);
    w.u8(static_cast<std::uint8_t>(t.kind));
    w.u16(narrow_field<std::uint16_t>(t.steps, "T_all"));
    w.u16(narrow_field<std::uint16_t>(t.height, "H"));
    w.u16(narrow_field<std::uint16_t>(t.width, "W"));
    w.u8(narrow_field<std::uint8_t>(t.channels, "C"));
    w.u64(t.seed);
    for (float v : t.frames) w.f32(v);
  }
  detail::write_file_bytes(path.string(), w.data());
}

std::vector<Trajectory> read_dataset(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  detail::ByteReader r(bytes.data(), bytes.size(), "dataset '" + path.string() + "'");
  std::vector<Trajectory> out;
  if (bytes.empty()) throw FormatError("dataset '" + path.string() + "': empty file");
  while (!r.done()) {
    r.expect_magic("POBD");
    r.expect_version(kDatasetVersion);
    Trajectory t;
    const auto kind = r.u8();
    if (kind > 2) throw FormatError("dataset '" + path.string() + "': unknown pde kind " + std::to_string(kind));
    t.kind = static_cast<PdeKind>(kind);
    t.steps = r.u16();
    t.height = r.u16();
    t.width = r.u16();
    t.channels = r.u8();
    t.seed = r.u64();
    const std::size_t n = t.steps * t.frame_size();
    r.need(n * 4);
    t.frames.resize(n);
    for (auto& v : t.frames) v = r.f32();
    out.push_back(std::move(t));
  }
  return out;
}

KeyValue DatasetManifest::to_keyvalue() const {
  KeyValue kv;
  kv.set("format", "lano-dataset-manifest");
  kv.set("pde_kind", std::string(to_string(kind)));
  kv.set("height", static_cast<std::uint64_t>(height));
  kv.set("width", static_cast<std::uint64_t>(width));
  kv.set("channels", static_cast<std::uint64_t>(channels));
  kv.set("steps", static_cast<std::uint64_t>(steps));
  kv.set("dt", dt);
  kv.set("base_seed", base_seed);
  std::string names;
  for (const auto& s : splits) names += (names.empty() ? "" : ",") + s.name;
  kv.set("splits", names);
  for (const auto& s : splits) {
    kv.set("split." + s.name + ".file", s.file);
    kv.set("split." + s.name + ".count", static_cast<std::uint64_t>(s.count));
    kv.set("split." + s.name + ".first_index", s.first_seed);
  }
  kv.set("channel_mean", join_doubles(stats.mean));
  kv.set("channel_std", join_doubles(stats.stddev));
  for (const auto& [k, v] : extra.entries()) kv.set("gen." + k, v);
  return kv;
}

DatasetManifest DatasetManifest::from_keyvalue(const KeyValue& kv) {
  DatasetManifest m;
  m.kind = parse_pde_kind(kv.get("pde_kind"));
  m.height = kv.get_uint("height");
  m.width = kv.get_uint("width");
  m.channels = kv.get_uint("channels");
  m.steps = kv.get_uint("steps");
  m.dt = kv.get_double("dt");
  m.base_seed = kv.get_uint("base_seed");
  std::stringstream ss(kv.get("splits"));
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    Split s;
    s.name = name;
    s.file = kv.get("split." + name + ".file");
    s.count = kv.get_uint("split." + name + ".count");
    s.first_seed = kv.get_uint("split." + name + ".first_index");
    m.splits.push_back(std::move(s));
  }
  m.stats.mean = split_doubles(kv.get_or("channel_mean", ""));
  m.stats.stddev = split_doubles(kv.get_or("channel_std", ""));
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("gen.", 0) == 0) m.extra.set(k.substr(4), v);
  }
  return m;
}

const DatasetManifest::Split& DatasetManifest::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ValueError("manifest: no split named '" + name + "'");
}

std::vector<Trajectory> load_split(const std::filesystem::path& manifest_path, const std::string& split) {
  const auto m = DatasetManifest::load(manifest_path);
  const auto& s = m.split(split);
  auto trajs = read_dataset(manifest_path.parent_path() / s.file);
  if (trajs.size() != s.count) {
    throw FormatError("split '" + split + "': manifest lists " + std::to_string(s.count) +
                      " trajectories, file holds " + std::to_string(trajs.size()));
  }
  for (auto& t : trajs) t.dt = m.dt;
  return trajs;
}

DatasetManifest generate_dataset(const std::filesystem::path& dir, const GenerateOptions& o) {
  if (o.train == 0) throw ValueError("gen-data: need at least one training trajectory");
  if (o.steps < 2) throw ValueError("gen-data: need at least 2 frames per trajectory");
  std::filesystem::create_directories(dir);
  const std::size_t n_val = o.val ? o.val : std::max<std::size_t>(1, o.train / 10);
  const std::size_t n_test = o.test ? o.test : std::max<std::size_t>(1, o.train / 10);
  const auto grid = GridGeometry::square(o.grid);

  DatasetManifest m;
  m.kind = o.kind;
  m.height = m.width = o.grid;
  m.steps = o.steps;
  m.base_seed = o.seed;

  NavierStokesParams ns = o.ns;
  if (o.kind == PdeKind::navier_stokes) {
    const std::size_t solver_n = std::max(o.grid, o.ns_solver_grid);
    if (solver_n % o.grid != 0) throw ValueError("gen-data: solver grid must be a multiple of the output grid");
    ns.subsample = solver_n / o.grid;
    m.channels = 1;
    m.dt = ns.dt * static_cast<double>(ns.substeps);
    m.extra.set("viscosity", ns.viscosity);
    m.extra.set("solver_dt", ns.dt);
    m.extra.set("substeps", static_cast<std::uint64_t>(ns.substeps));
    m.extra.set("solver_grid", static_cast<std::uint64_t>(solver_n));
  } else if (o.kind == PdeKind::diffusion_reaction) {
    m.channels = 2;
    m.dt = o.dr.dt * static_cast<double>(o.dr.substeps);
    m.extra.set("diffusion_u", o.dr.diffusion_u);
    m.extra.set("diffusion_v", o.dr.diffusion_v);
    m.extra.set("k", o.dr.k);
    m.extra.set("solver_dt", o.dr.dt);
    m.extra.set("substeps", static_cast<std::uint64_t>(o.dr.substeps));
    m.extra.set("ic_modes", static_cast<std::uint64_t>(o.dr.ic_modes > 0 ? o.dr.ic_modes
                                                                          : std::max<std::size_t>(1, o.grid / 16)));
  } else {
    throw ValueError("gen-data: cannot generate external data");
  }

  // Trajectory i of the whole dataset uses seed mix_seed(base, i); the split
  // index ranges are disjoint, hence so are the seeds.
  std::size_t next_index = 0;
  std::vector<Trajectory> train_set;
  for (const auto& [name, count] : {std::pair<std::string, std::size_t>{"train", o.train},
                                    {"val", n_val},
                                    {"test", n_test}}) {
    std::vector<Trajectory> trajs;
    trajs.reserve(count);
    DatasetManifest::Split s{name, name + ".pobd", count, next_index};
    for (std::size_t i = 0; i < count; ++i, ++next_index) {
      const auto seed = mix_seed(o.seed, next_index);
      trajs.push_back(o.kind == PdeKind::navier_stokes ? solve_navier_stokes(grid, seed, o.steps, ns)
                                                       : solve_diffusion_reaction(grid, seed, o.steps, o.dr));
    }
    write_dataset(dir / s.file, trajs);
    if (name == "train") train_set = std::move(trajs);
    m.splits.push_back(std::move(s));
  }
  m.stats = channel_statistics(train_set);
  m.save(dir / "manifest.txt");
  return m;
}

}  // namespace lano
