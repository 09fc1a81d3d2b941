// Copyright (c) 2026 SSH-UNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sshunet/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "sshunet/errors.hpp"

namespace sshunet {

namespace {

using i64 = std::int64_t;

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("invalid number '" + s + "' for " + what);
  }
  return v;
}

template <std::size_t N>
std::array<double, N> to_doubles(const std::string& s, char sep, const std::string& what) {
  const auto parts = split(s, sep);
  if (parts.size() != N) throw ConfigError(what + " needs " + std::to_string(N) + " values, got '" + s + "'");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_double(parts[i], what);
  return out;
}

i64 to_int(const std::string& s, const std::string& what) {
  const double v = to_double(s, what);
  if (v != std::floor(v)) throw ConfigError(what + " must be an integer, got '" + s + "'");
  return static_cast<i64>(v);
}

const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::kSphere:
      return "sphere";
    case PrimitiveKind::kEllipsoid:
      return "ellipsoid";
    case PrimitiveKind::kCylinder:
      return "cylinder";
  }
  return "?";
}

}  // namespace

bool Primitive::contains(double x, double y, double z) const {
  const double p[3] = {x - center[0], y - center[1], z - center[2]};
  switch (kind) {
    case PrimitiveKind::kSphere:
      return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= radii[0] * radii[0];
    case PrimitiveKind::kEllipsoid: {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += (p[i] / radii[i]) * (p[i] / radii[i]);
      return s <= 1.0;
    }
    case PrimitiveKind::kCylinder: {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      return std::fabs(p[axis]) <= half_length && p[u] * p[u] + p[v] * p[v] <= radii[0] * radii[0];
    }
  }
  return false;
}

std::array<std::array<double, 2>, 3> Primitive::bounds() const {
  std::array<double, 3> half{};
  switch (kind) {
    case PrimitiveKind::kSphere:
      half = {radii[0], radii[0], radii[0]};
      break;
    case PrimitiveKind::kEllipsoid:
      half = radii;
      break;
    case PrimitiveKind::kCylinder:
      half = {radii[0], radii[0], radii[0]};
      half[static_cast<std::size_t>(axis)] = half_length;
      break;
  }
  std::array<std::array<double, 2>, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = {center[i] - half[i], center[i] + half[i]};
  return out;
}

std::vector<std::string> PhantomSpec::violations() const {
  std::vector<std::string> out;
  for (int i = 0; i < 3; ++i) {
    if (extent[i] <= 0) out.push_back("extent[" + std::to_string(i) + "] must be positive");
    if (!(spacing[i] > 0.0)) out.push_back("spacing[" + std::to_string(i) + "] must be positive");
  }
  if (num_classes < 1) out.emplace_back("num_classes must be positive");
  if (static_cast<int>(class_means.size()) != num_classes) {
    out.push_back("class_means needs one value per class (" + std::to_string(num_classes) + ")");
  }
  if (!(noise_sigma >= 0.0)) out.emplace_back("noise_sigma must be non-negative");
  for (std::size_t n = 0; n < primitives.size(); ++n) {
    const auto& p = primitives[n];
    const auto tag = std::string(kind_name(p.kind)) + " #" + std::to_string(n);
    if (p.cls < 1 || p.cls >= num_classes) {
      out.push_back(tag + " has class " + std::to_string(p.cls) + " outside [1, " + std::to_string(num_classes) + ")");
    }
    if (p.kind == PrimitiveKind::kCylinder && (p.axis < 0 || p.axis > 2)) out.push_back(tag + " has axis outside 0..2");
    bool positive = p.radii[0] > 0.0;
    if (p.kind == PrimitiveKind::kEllipsoid) positive = positive && p.radii[1] > 0.0 && p.radii[2] > 0.0;
    if (p.kind == PrimitiveKind::kCylinder) positive = positive && p.half_length > 0.0;
    if (!positive) {
      out.push_back(tag + " needs positive size");
      continue;
    }
    if (p.kind == PrimitiveKind::kCylinder && (p.axis < 0 || p.axis > 2)) continue;
    const auto b = p.bounds();
    for (int i = 0; i < 3; ++i) {
      if (b[i][0] < 0.0 || b[i][1] > static_cast<double>(extent[i] - 1)) {
        out.push_back(tag + " leaves the extent along axis " + std::to_string(i));
        break;
      }
    }
  }
  return out;
}

PhantomSpec PhantomSpec::slice_ambiguous(std::int64_t extent, std::uint64_t seed) {
  PhantomSpec s;
  s.extent = {extent, extent, extent};
  s.seed = seed;
  s.id = "ambiguous_" + std::to_string(seed);
  Rng rng(seed ^ 0x5eed5eedULL);
  const double e = static_cast<double>(extent);
  std::uniform_real_distribution<double> radius(0.08 * e, 0.2 * e);
  std::uniform_real_distribution<double> length(0.15 * e, 0.3 * e);

  Primitive sphere;
  sphere.kind = PrimitiveKind::kSphere;
  sphere.cls = 1;
  Primitive cyl;
  cyl.kind = PrimitiveKind::kCylinder;
  cyl.cls = 2;
  cyl.axis = 0;

  auto place = [&](Primitive& p) {
    const auto b = p.bounds();
    for (int i = 0; i < 3; ++i) {
      const double half = (b[i][1] - b[i][0]) / 2.0;
      std::uniform_real_distribution<double> c(half, e - 1.0 - half);
      p.center[i] = c(rng);
    }
  };
  // disjoint X ranges: no slice shows both discs
  auto apart = [&]() {
    const auto a = sphere.bounds(), b = cyl.bounds();
    return a[0][1] + 1.0 < b[0][0] || b[0][1] + 1.0 < a[0][0];
  };
  // rejection-sample sizes and centres that keep both inside and apart
  for (int attempt = 0;; ++attempt) {
    const double r = radius(rng);
    sphere.radii = {r, r, r};
    cyl.radii = sphere.radii;
    cyl.half_length = length(rng);
    place(sphere);
    place(cyl);
    if (apart()) break;
    if (attempt > 10000) throw ConfigError("cannot place slice-ambiguous primitives in extent " + std::to_string(extent));
  }
  s.primitives = {sphere, cyl};
  return s;
}

std::string PhantomSpec::to_text() const {
  std::ostringstream os;
  os << "id = " << id << "\n";
  os << "extent = " << extent[0] << " " << extent[1] << " " << extent[2] << "\n";
  os << "num_classes = " << num_classes << "\n";
  os << "class_means =";
  for (double m : class_means) os << " " << fmt(m);
  os << "\n";
  os << "noise_sigma = " << fmt(noise_sigma) << "\n";
  os << "spacing = " << fmt(spacing[0]) << " " << fmt(spacing[1]) << " " << fmt(spacing[2]) << "\n";
  os << "seed = " << seed << "\n";
  for (const auto& p : primitives) {
    os << kind_name(p.kind) << " = class:" << p.cls << " center:" << fmt(p.center[0]) << "," << fmt(p.center[1]) << ","
       << fmt(p.center[2]);
    switch (p.kind) {
      case PrimitiveKind::kSphere:
        os << " radius:" << fmt(p.radii[0]);
        break;
      case PrimitiveKind::kEllipsoid:
        os << " radii:" << fmt(p.radii[0]) << "," << fmt(p.radii[1]) << "," << fmt(p.radii[2]);
        break;
      case PrimitiveKind::kCylinder:
        os << " radius:" << fmt(p.radii[0]) << " axis:" << p.axis << " half_length:" << fmt(p.half_length);
        break;
    }
    os << "\n";
  }
  return os.str();
}

PhantomSpec PhantomSpec::parse(const std::string& text) {
  PhantomSpec s;
  s.primitives.clear();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool means_given = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto where = "line " + std::to_string(lineno) + " (" + key + ")";
    if (key == "id") {
      s.id = value;
    } else if (key == "extent") {
      const auto v = to_doubles<3>(value, ' ', where);
      for (int i = 0; i < 3; ++i) s.extent[i] = to_int(fmt(v[i]), where);
    } else if (key == "num_classes") {
      s.num_classes = static_cast<int>(to_int(value, where));
    } else if (key == "class_means") {
      s.class_means.clear();
      for (const auto& p : split(value, ' ')) s.class_means.push_back(to_double(p, where));
      means_given = true;
    } else if (key == "noise_sigma") {
      s.noise_sigma = to_double(value, where);
    } else if (key == "spacing") {
      s.spacing = to_doubles<3>(value, ' ', where);
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(to_int(value, where));
    } else if (key == "sphere" || key == "ellipsoid" || key == "cylinder") {
      Primitive p;
      p.kind = key == "sphere" ? PrimitiveKind::kSphere
                               : (key == "ellipsoid" ? PrimitiveKind::kEllipsoid : PrimitiveKind::kCylinder);
      std::map<std::string, std::string> fields;
      for (const auto& item : split(value, ' ')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError(where + ": expected field:value, got '" + item + "'");
        fields[item.substr(0, colon)] = item.substr(colon + 1);
      }
      auto take = [&](const std::string& name) {
        auto it = fields.find(name);
        if (it == fields.end()) throw ConfigError(where + ": missing field '" + name + "'");
        auto v = it->second;
        fields.erase(it);
        return v;
      };
      p.cls = static_cast<int>(to_int(take("class"), where));
      p.center = to_doubles<3>(take("center"), ',', where);
      if (p.kind == PrimitiveKind::kEllipsoid) {
        p.radii = to_doubles<3>(take("radii"), ',', where);
      } else {
        const double r = to_double(take("radius"), where);
        p.radii = {r, r, r};
      }
      if (p.kind == PrimitiveKind::kCylinder) {
        p.axis = static_cast<int>(to_int(take("axis"), where));
        p.half_length = to_double(take("half_length"), where);
      }
      if (!fields.empty()) throw ConfigError(where + ": unknown field '" + fields.begin()->first + "'");
      s.primitives.push_back(p);
    } else {
      throw ConfigError(where + ": unknown key");
    }
  }
  if (!means_given && static_cast<int>(s.class_means.size()) != s.num_classes) {
    s.class_means.assign(static_cast<std::size_t>(std::max(s.num_classes, 0)), 0.0);
  }
  return s;
}

VolumeRecord generate_phantom(const PhantomSpec& spec) {
  const auto v = spec.violations();
  if (!v.empty()) throw ConfigError("invalid phantom spec: " + join(v, "; "));
  VolumeRecord rec;
  rec.id = spec.id;
  rec.labels = LabelVolume::zeros(spec.extent, spec.spacing);
  const auto [X, Y, Z] = spec.extent;
  for (const auto& p : spec.primitives) {
    const auto b = p.bounds();
    const i64 x0 = static_cast<i64>(std::ceil(b[0][0])), x1 = static_cast<i64>(std::floor(b[0][1]));
    const i64 y0 = static_cast<i64>(std::ceil(b[1][0])), y1 = static_cast<i64>(std::floor(b[1][1]));
    const i64 z0 = static_cast<i64>(std::ceil(b[2][0])), z1 = static_cast<i64>(std::floor(b[2][1]));
    for (i64 x = x0; x <= x1; ++x)
      for (i64 y = y0; y <= y1; ++y)
        for (i64 z = z0; z <= z1; ++z) {
          if (p.contains(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z))) {
            rec.labels.at(x, y, z) = p.cls;
          }
        }
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> data(static_cast<std::size_t>(X * Y * Z));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double n = noise(rng);
    data[i] = static_cast<float>(spec.class_means[static_cast<std::size_t>(rec.labels.labels[i])] + spec.noise_sigma * n);
  }
  rec.intensity = Tensor::from_data({1, X, Y, Z}, std::move(data));
  return rec;
}

// ---------------------------------------------------------------- NIfTI-1

namespace {

constexpr std::size_t kNiftiHeader = 348;

struct HeaderView {
  const std::vector<char>& bytes;
  bool swap;

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes.data() + offset, sizeof(T));
    return swap ? detail::byte_swap(v) : v;
  }
};

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

NiftiImage read_nifti1(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const auto where = " in '" + path.string() + "'";
  if (bytes.size() < kNiftiHeader) {
    throw FormatError("truncated NIfTI header (" + std::to_string(bytes.size()) + " of 348 bytes)" + where);
  }
  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  const bool host_le = detail::host_is_little_endian();
  bool swap = false;
  if (sizeof_hdr == 348) {
    swap = false;
  } else if (detail::byte_swap(sizeof_hdr) == 348) {
    swap = true;
  } else {
    throw FormatError("sizeof_hdr is not 348 in either byte order" + where);
  }
  NiftiImage img;
  img.big_endian = host_le == swap;
  const HeaderView h{bytes, swap};
  img.magic = std::string(bytes.data() + 344, 3);
  if ((img.magic != "n+1" && img.magic != "ni1") || bytes[347] != '\0') {
    throw FormatError("bad NIfTI-1 magic" + where);
  }
  for (int i = 0; i < 8; ++i) img.dim[i] = h.get<std::int16_t>(40 + 2 * i);
  img.datatype = h.get<std::int16_t>(70);
  img.bitpix = h.get<std::int16_t>(72);
  for (int i = 0; i < 8; ++i) img.pixdim[i] = h.get<float>(76 + 4 * i);
  img.vox_offset = h.get<float>(108);
  img.scl_slope = h.get<float>(112);
  img.scl_inter = h.get<float>(116);

  if (img.dim[0] < 3 || img.dim[0] > 7) {
    throw UnsupportedError("only 3D volumes are supported, dim[0] = " + std::to_string(img.dim[0]) + where);
  }
  for (int i = 4; i <= img.dim[0]; ++i) {
    if (img.dim[i] != 1) throw UnsupportedError("only 3D volumes are supported (dim[" + std::to_string(i) + "] > 1)" + where);
  }
  for (int i = 1; i <= 3; ++i) {
    if (img.dim[i] <= 0) throw FormatError("non-positive dim[" + std::to_string(i) + "]" + where);
  }
  std::size_t width = 0;
  switch (img.datatype) {
    case kNiftiUint8:
      width = 1;
      break;
    case kNiftiInt16:
      width = 2;
      break;
    case kNiftiFloat32:
      width = 4;
      break;
    default:
      throw UnsupportedError("unsupported NIfTI datatype " + std::to_string(img.datatype) +
                             " (supported: 2 uint8, 4 int16, 16 float32)" + where);
  }

  std::vector<char> image_file;
  const std::vector<char>* data = &bytes;
  if (img.magic == "ni1") {
    auto img_path = path;
    img_path.replace_extension(".img");
    image_file = read_all(img_path);
    data = &image_file;
  }
  const auto [X, Y, Z] = img.shape();
  const auto count = static_cast<std::size_t>(X * Y * Z);
  if (img.vox_offset < 0.0f) throw FormatError("negative vox_offset" + where);
  const auto offset = static_cast<std::size_t>(img.vox_offset);
  if (data->size() < offset + count * width) throw FormatError("truncated voxel data" + where);

  const bool scale = img.scl_slope != 0.0f && std::isfinite(img.scl_slope);
  const HeaderView d{*data, swap};
  img.voxels.resize(count);
  // file order is x fastest; ours is z fastest
  for (i64 z = 0; z < Z; ++z)
    for (i64 y = 0; y < Y; ++y)
      for (i64 x = 0; x < X; ++x) {
        const std::size_t src = offset + static_cast<std::size_t>(x + X * (y + Y * z)) * width;
        float v = 0.0f;
        switch (img.datatype) {
          case kNiftiUint8:
            v = static_cast<float>(static_cast<unsigned char>((*data)[src]));
            break;
          case kNiftiInt16:
            v = static_cast<float>(d.get<std::int16_t>(src));
            break;
          default:
            v = d.get<float>(src);
        }
        if (scale) v = v * img.scl_slope + img.scl_inter;
        img.voxels[static_cast<std::size_t>((x * Y + y) * Z + z)] = v;
      }
  return img;
}

VolumeRecord parse_nifti1(const std::filesystem::path& image, const std::optional<std::filesystem::path>& labels) {
  const auto img = read_nifti1(image);
  VolumeRecord rec;
  rec.id = image.stem().string();
  const auto shape = img.shape();
  rec.labels = LabelVolume::zeros(shape, img.spacing());
  for (double s : rec.labels.spacing) {
    if (!(s > 0.0)) throw FormatError("non-positive pixdim in '" + image.string() + "'");
  }
  rec.intensity = Tensor::from_data({1, shape[0], shape[1], shape[2]}, img.voxels);
  if (labels) {
    const auto lab = read_nifti1(*labels);
    if (lab.shape() != shape) throw FormatError("label volume '" + labels->string() + "' differs in shape");
    for (std::size_t i = 0; i < lab.voxels.size(); ++i) {
      rec.labels.labels[i] = static_cast<std::int32_t>(std::lround(lab.voxels[i]));
    }
  }
  return rec;
}

void write_nifti1(const std::filesystem::path& path, std::array<std::int64_t, 3> shape, std::array<double, 3> spacing,
                  const std::vector<float>& values, const NiftiWriteOptions& opts) {
  const auto [X, Y, Z] = shape;
  if (static_cast<i64>(values.size()) != X * Y * Z) throw ArgumentError("NIfTI payload does not match its shape");
  if (opts.scl_slope == 0.0f) throw ArgumentError("scl_slope must be non-zero");
  std::size_t width = 0;
  std::int16_t bitpix = 0;
  switch (opts.datatype) {
    case kNiftiUint8:
      width = 1;
      bitpix = 8;
      break;
    case kNiftiInt16:
      width = 2;
      bitpix = 16;
      break;
    case kNiftiFloat32:
      width = 4;
      bitpix = 32;
      break;
    default:
      throw UnsupportedError("cannot write NIfTI datatype " + std::to_string(opts.datatype));
  }
  const bool swap = opts.big_endian == detail::host_is_little_endian();
  std::vector<char> out(352 + values.size() * width, 0);
  auto put = [&](std::size_t offset, auto v) {
    if (swap) v = detail::byte_swap(v);
    std::memcpy(out.data() + offset, &v, sizeof(v));
  };
  put(0, std::int32_t{348});
  const std::int16_t dims[8] = {3, static_cast<std::int16_t>(X), static_cast<std::int16_t>(Y),
                                static_cast<std::int16_t>(Z), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put(40 + 2 * i, dims[i]);
  put(70, opts.datatype);
  put(72, bitpix);
  const float pix[8] = {1.0f, static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                        static_cast<float>(spacing[2]), 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) put(76 + 4 * i, pix[i]);
  put(108, 352.0f);
  put(112, opts.scl_slope);
  put(116, opts.scl_inter);
  std::memcpy(out.data() + 344, "n+1", 4);
  for (i64 z = 0; z < Z; ++z)
    for (i64 y = 0; y < Y; ++y)
      for (i64 x = 0; x < X; ++x) {
        const float v = (values[static_cast<std::size_t>((x * Y + y) * Z + z)] - opts.scl_inter) / opts.scl_slope;
        const std::size_t dst = 352 + static_cast<std::size_t>(x + X * (y + Y * z)) * width;
        switch (opts.datatype) {
          case kNiftiUint8:
            out[dst] = static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L)));
            break;
          case kNiftiInt16:
            put(dst, static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L)));
            break;
          default:
            put(dst, v);
        }
      }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------- SSHV

void write_sshv(const std::filesystem::path& path, const VolumeRecord& rec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write("SSHV", 4);
  detail::write_le<std::uint32_t>(out, 1);
  for (auto d : rec.labels.shape) detail::write_le<std::int64_t>(out, d);
  for (auto s : rec.labels.spacing) detail::write_le<double>(out, s);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNiftiFloat32));
  detail::write_le<std::uint32_t>(out, 1);
  for (float v : rec.intensity.data()) detail::write_le<float>(out, v);
  for (auto l : rec.labels.labels) detail::write_le<std::int32_t>(out, l);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.id.size()));
  out.write(rec.id.data(), static_cast<std::streamsize>(rec.id.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

VolumeRecord read_sshv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const auto where = " in '" + path.string() + "'";
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "SSHV") throw FormatError("bad SSHV magic" + where);
  std::uint32_t version = 0, dtype = 0, has_labels = 0;
  if (!detail::read_le(in, version) || version != 1) throw FormatError("unsupported SSHV version" + where);
  std::array<std::int64_t, 3> shape{};
  std::array<double, 3> spacing{};
  for (auto& d : shape) {
    if (!detail::read_le(in, d) || d <= 0 || d > (1 << 16)) throw FormatError("bad SSHV dims" + where);
  }
  for (auto& s : spacing) {
    if (!detail::read_le(in, s) || !(s > 0.0)) throw FormatError("bad SSHV spacing" + where);
  }
  if (!detail::read_le(in, dtype) || !detail::read_le(in, has_labels)) throw FormatError("truncated SSHV header" + where);
  if (dtype != static_cast<std::uint32_t>(kNiftiFloat32)) {
    throw UnsupportedError("SSHV dtype " + std::to_string(dtype) + " unsupported" + where);
  }
  VolumeRecord rec;
  rec.labels = LabelVolume::zeros(shape, spacing);
  std::vector<float> data(static_cast<std::size_t>(rec.labels.numel()));
  for (auto& v : data) {
    if (!detail::read_le(in, v)) throw FormatError("truncated SSHV payload" + where);
  }
  rec.intensity = Tensor::from_data({1, shape[0], shape[1], shape[2]}, std::move(data));
  if (has_labels) {
    for (auto& l : rec.labels.labels) {
      if (!detail::read_le(in, l)) throw FormatError("truncated SSHV labels" + where);
    }
  }
  std::uint32_t len = 0;
  if (detail::read_le(in, len) && len < 4096) {
    rec.id.resize(len);
    in.read(rec.id.data(), len);
  }
  if (rec.id.empty()) rec.id = path.stem().string();
  return rec;
}

// ---------------------------------------------------------------- preprocessing

Tensor hu_window(const Tensor& v, float lo, float hi) {
  if (!(lo < hi)) throw ArgumentError("hu_window needs lo < hi");
  std::vector<float> out(v.data().begin(), v.data().end());
  const double span = static_cast<double>(hi) - lo;
  for (auto& x : out) x = static_cast<float>((static_cast<double>(std::clamp(x, lo, hi)) - lo) / span);
  return Tensor::from_data(v.shape(), std::move(out));
}

PatchPair crop(const Tensor& intensity, const LabelVolume& labels, std::array<std::int64_t, 3> corner,
               std::int64_t extent) {
  const auto [X, Y, Z] = labels.shape;
  for (int i = 0; i < 3; ++i) {
    if (corner[i] < 0 || corner[i] + extent > labels.shape[i]) throw ArgumentError("crop leaves the volume");
  }
  const i64 C = intensity.dim(0);
  const i64 E = extent;
  PatchPair p;
  p.labels = LabelVolume::zeros({E, E, E}, labels.spacing);
  std::vector<float> out(static_cast<std::size_t>(C * E * E * E));
  const auto in = intensity.data();
  for (i64 c = 0; c < C; ++c)
    for (i64 x = 0; x < E; ++x)
      for (i64 y = 0; y < E; ++y)
        for (i64 z = 0; z < E; ++z) {
          const i64 sx = corner[0] + x, sy = corner[1] + y, sz = corner[2] + z;
          out[static_cast<std::size_t>(((c * E + x) * E + y) * E + z)] = in[static_cast<std::size_t>(((c * X + sx) * Y + sy) * Z + sz)];
          if (c == 0) p.labels.at(x, y, z) = labels.at(sx, sy, sz);
        }
  p.intensity = Tensor::from_data({C, E, E, E}, std::move(out));
  return p;
}

PatchPair sample_patch(const VolumeRecord& rec, std::int64_t extent, Rng& rng, double fg_bias) {
  const auto shape = rec.labels.shape;
  if (extent <= 0) throw ArgumentError("patch extent must be positive");
  for (int i = 0; i < 3; ++i) {
    if (extent > shape[i]) {
      throw ArgumentError("patch extent " + std::to_string(extent) + " exceeds volume axis " + std::to_string(i) +
                          " (" + std::to_string(shape[i]) + ")");
    }
  }
  std::bernoulli_distribution use_fg(std::clamp(fg_bias, 0.0, 1.0));
  std::array<std::int64_t, 3> corner{};
  bool centred = false;
  if (use_fg(rng)) {
    std::vector<i64> fg;
    for (std::size_t i = 0; i < rec.labels.labels.size(); ++i) {
      if (rec.labels.labels[i] > 0) fg.push_back(static_cast<i64>(i));
    }
    if (!fg.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, fg.size() - 1);
      const i64 idx = fg[pick(rng)];
      const i64 c[3] = {idx / (shape[1] * shape[2]), (idx / shape[2]) % shape[1], idx % shape[2]};
      for (int i = 0; i < 3; ++i) corner[i] = std::clamp<i64>(c[i] - extent / 2, 0, shape[i] - extent);
      centred = true;
    }
  }
  if (!centred) {
    for (int i = 0; i < 3; ++i) {
      std::uniform_int_distribution<i64> u(0, shape[i] - extent);
      corner[i] = u(rng);
    }
  }
  return crop(rec.intensity, rec.labels, corner, extent);
}

// ---------------------------------------------------------------- augmentation

namespace {

// Applies an index map dst -> src over the spatial grid of a cubic patch.
template <typename Map>
PatchPair remap(const PatchPair& p, Map&& src_of) {
  const auto [X, Y, Z] = p.labels.shape;
  const i64 C = p.intensity.dim(0);
  PatchPair out;
  out.labels = LabelVolume::zeros(p.labels.shape, p.labels.spacing);
  std::vector<float> data(static_cast<std::size_t>(p.intensity.numel()));
  const auto in = p.intensity.data();
  for (i64 x = 0; x < X; ++x)
    for (i64 y = 0; y < Y; ++y)
      for (i64 z = 0; z < Z; ++z) {
        const auto s = src_of(std::array<i64, 3>{x, y, z});
        out.labels.at(x, y, z) = p.labels.at(s[0], s[1], s[2]);
        for (i64 c = 0; c < C; ++c) {
          data[static_cast<std::size_t>(((c * X + x) * Y + y) * Z + z)] =
              in[static_cast<std::size_t>(((c * X + s[0]) * Y + s[1]) * Z + s[2])];
        }
      }
  out.intensity = Tensor::from_data(p.intensity.shape(), std::move(data));
  return out;
}

void check_patch(const PatchPair& p) {
  if (p.intensity.rank() != 4) throw ArgumentError("patch intensity must be [C, X, Y, Z]");
  for (int i = 0; i < 3; ++i) {
    if (p.intensity.dim(i + 1) != p.labels.shape[i]) throw ArgumentError("patch intensity and labels differ in shape");
  }
}

}  // namespace

std::vector<std::string> AugmentConfig::violations() const {
  std::vector<std::string> out;
  const std::pair<const char*, double> probs[] = {{"p_flip", p_flip},
                                                  {"p_rotate", p_rotate},
                                                  {"p_intensity_scale", p_intensity_scale},
                                                  {"p_intensity_shift", p_intensity_shift}};
  for (const auto& [name, p] : probs) {
    if (!(p >= 0.0 && p <= 1.0)) out.push_back(std::string(name) + " must lie in [0, 1]");
  }
  if (!(scale_range[0] <= scale_range[1])) out.emplace_back("scale_range must be ordered");
  if (!(shift_range[0] <= shift_range[1])) out.emplace_back("shift_range must be ordered");
  return out;
}

PatchPair flip(const PatchPair& p, int axis) {
  check_patch(p);
  if (axis < 0 || axis > 2) throw ArgumentError("flip axis must be 0, 1 or 2");
  const i64 n = p.labels.shape[static_cast<std::size_t>(axis)];
  return remap(p, [&](std::array<i64, 3> d) {
    d[static_cast<std::size_t>(axis)] = n - 1 - d[static_cast<std::size_t>(axis)];
    return d;
  });
}

PatchPair rot90(const PatchPair& p, int a, int b, int k) {
  check_patch(p);
  if (a < 0 || b > 2 || a >= b) throw ArgumentError("rotation plane must be two axes a < b");
  if (p.labels.shape[static_cast<std::size_t>(a)] != p.labels.shape[static_cast<std::size_t>(b)]) {
    throw ArgumentError("rotation plane must be square");
  }
  k = ((k % 4) + 4) % 4;
  const i64 n = p.labels.shape[static_cast<std::size_t>(a)];
  PatchPair out = p;
  for (int i = 0; i < k; ++i) {
    // one quarter turn: dst[a] = src[b] mirrored, dst[b] = src[a]
    out = remap(out, [&](std::array<i64, 3> d) {
      std::array<i64, 3> s = d;
      s[static_cast<std::size_t>(a)] = d[static_cast<std::size_t>(b)];
      s[static_cast<std::size_t>(b)] = n - 1 - d[static_cast<std::size_t>(a)];
      return s;
    });
  }
  return out;
}

PatchPair augment(const PatchPair& p, const AugmentConfig& cfg, Rng& rng) {
  check_patch(p);
  const auto v = cfg.violations();
  if (!v.empty()) throw ConfigError("invalid augmentation config: " + join(v, "; "));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PatchPair out = p;
  if (unit(rng) < cfg.p_flip) {
    std::uniform_int_distribution<int> axis(0, 2);
    out = flip(out, axis(rng));
  }
  if (unit(rng) < cfg.p_rotate) {
    static constexpr int kPlanes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    std::uniform_int_distribution<int> plane(0, 2), turns(1, 3);
    const int pl = plane(rng);
    const int k = turns(rng);
    if (out.labels.shape[static_cast<std::size_t>(kPlanes[pl][0])] ==
        out.labels.shape[static_cast<std::size_t>(kPlanes[pl][1])]) {
      out = rot90(out, kPlanes[pl][0], kPlanes[pl][1], k);
    }
  }
  const bool do_scale = unit(rng) < cfg.p_intensity_scale;
  const double scale = cfg.scale_range[0] + (cfg.scale_range[1] - cfg.scale_range[0]) * unit(rng);
  const bool do_shift = unit(rng) < cfg.p_intensity_shift;
  const double shift = cfg.shift_range[0] + (cfg.shift_range[1] - cfg.shift_range[0]) * unit(rng);
  if (do_scale || do_shift) {
    std::vector<float> data(out.intensity.data().begin(), out.intensity.data().end());
    for (auto& x : data) {
      double y = x;
      if (do_scale) y *= scale;
      if (do_shift) y += shift;
      x = static_cast<float>(y);
    }
    out.intensity = Tensor::from_data(out.intensity.shape(), std::move(data));
  }
  return out;
}

}  // namespace sshunet
