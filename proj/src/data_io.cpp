#include "canseg/data_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace canseg {

namespace {

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}

}  // namespace

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len,
                         std::uint32_t seed) {
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto& t = crc_table();
  for (std::size_t i = 0; i < len; ++i) c = t[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xFF));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xFF));
}

// Cursor over the container bytes; every failure reports the offset so a
// truncated or flipped byte is easy to localize.
struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > b.size())
      fail("weight container truncated at byte " + std::to_string(pos) +
           " while reading " + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = std::uint16_t(b[pos]) | std::uint16_t(b[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize_container(
    const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out;
  out.push_back('C');
  out.push_back('A');
  out.push_back('N');
  out.push_back('W');
  put_u16(out, kContainerVersion);
  put_u32(out, std::uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    check(t.name.size() <= 0xFFFF, "tensor name too long: " + t.name);
    check(t.data.size() == std::size_t(t.shape.numel()),
          "tensor " + t.name + ": data size does not match shape");
    put_u16(out, std::uint16_t(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(0);  // dtype F32
    out.push_back(4);  // rank
    put_u32(out, std::uint32_t(t.shape.n));
    put_u32(out, std::uint32_t(t.shape.c));
    put_u32(out, std::uint32_t(t.shape.h));
    put_u32(out, std::uint32_t(t.shape.w));
    for (float f : t.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }
  put_u32(out, crc32_ieee(out.data(), out.size()));
  return out;
}

std::vector<NamedTensor> parse_container(
    const std::vector<std::uint8_t>& bytes) {
  check(bytes.size() >= 14, "weight container too short (" +
                                std::to_string(bytes.size()) + " bytes)");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  std::uint32_t want = crc32_ieee(bytes.data(), bytes.size() - 4);
  if (stored != want)
    fail("weight container checksum mismatch (stored " + std::to_string(stored) +
         ", computed " + std::to_string(want) + ")");

  Reader r{bytes};
  if (r.u8("magic") != 'C' || r.u8("magic") != 'A' || r.u8("magic") != 'N' ||
      r.u8("magic") != 'W')
    fail("weight container: bad magic, expected \"CANW\"");
  std::uint16_t version = r.u16("version");
  if (version != kContainerVersion)
    fail("weight container: unsupported version " + std::to_string(version));
  std::uint32_t count = r.u32("tensor count");

  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    std::uint16_t nlen = r.u16("name length");
    r.need(nlen, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), nlen);
    r.pos += nlen;
    std::uint8_t dtype = r.u8("dtype");
    if (dtype != 0)
      fail("tensor " + t.name + ": unsupported dtype code " +
           std::to_string(dtype));
    std::uint8_t rank = r.u8("rank");
    if (rank != 4)
      fail("tensor " + t.name + ": unsupported rank " + std::to_string(rank));
    t.shape.n = int(r.u32("dim 0"));
    t.shape.c = int(r.u32("dim 1"));
    t.shape.h = int(r.u32("dim 2"));
    t.shape.w = int(r.u32("dim 3"));
    std::int64_t numel = t.shape.numel();
    check(numel >= 0, "tensor " + t.name + ": negative dimension");
    r.need(std::size_t(numel) * 4, ("payload of " + t.name).c_str());
    t.data.resize(std::size_t(numel));
    for (std::int64_t j = 0; j < numel; ++j) {
      std::uint32_t bits = r.u32("payload");
      std::memcpy(&t.data[std::size_t(j)], &bits, 4);
    }
    out.push_back(std::move(t));
  }
  if (r.pos != bytes.size() - 4)
    fail("weight container: " +
         std::to_string(bytes.size() - 4 - r.pos) +
         " unexpected trailing bytes at offset " + std::to_string(r.pos));
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  check(f.good(), "write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  check(f.good(), "cannot open: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  check(f.good(), "read failed: " + path);
  return bytes;
}

std::vector<NamedTensor> collect_params(const ParamSetT<float>& ps) {
  std::vector<NamedTensor> out;
  out.reserve(ps.entries.size());
  for (const auto& e : ps.entries) {
    NamedTensor t;
    t.name = e.name;
    t.shape = e.t->shape;
    t.data = e.t->data;
    out.push_back(std::move(t));
  }
  return out;
}

void load_params(ParamSetT<float>& ps, const std::vector<NamedTensor>& ts) {
  std::vector<bool> seen(ps.entries.size(), false);
  for (const auto& t : ts) {
    int idx = -1;
    for (std::size_t i = 0; i < ps.entries.size(); ++i) {
      if (ps.entries[i].name == t.name) {
        idx = int(i);
        break;
      }
    }
    if (idx < 0) fail("load: unknown tensor \"" + t.name + "\" in container");
    auto& dst = *ps.entries[std::size_t(idx)].t;
    if (!(dst.shape == t.shape))
      fail("load: tensor \"" + t.name + "\" has shape " + t.shape.str() +
           ", model expects " + dst.shape.str());
    if (seen[std::size_t(idx)])
      fail("load: duplicate tensor \"" + t.name + "\" in container");
    seen[std::size_t(idx)] = true;
    dst.data = t.data;
  }
  for (std::size_t i = 0; i < ps.entries.size(); ++i)
    if (!seen[i])
      fail("load: container is missing tensor \"" + ps.entries[i].name + "\"");
}

namespace {

// Minimal netpbm header scanner. Tracks byte position for error messages;
// accepts '#' comments and any whitespace between fields, as the format
// allows.
struct PnmReader {
  const std::vector<std::uint8_t>& b;
  const std::string& path;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < b.size()) {
      std::uint8_t c = b[pos];
      if (c == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }
  int read_int(const char* what) {
    skip_space();
    std::size_t start = pos;
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
      v = v * 10 + (b[pos] - '0');
      if (v > 1 << 30) fail(path + ": absurd " + std::string(what) +
                            " at byte " + std::to_string(start));
      ++pos;
    }
    if (pos == start)
      fail(path + ": expected " + std::string(what) + " at byte " +
           std::to_string(pos));
    return int(v);
  }
};

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    fail(path + ": not a binary PPM (expected magic \"P6\")");
  PnmReader r{bytes, path, 2};
  int w = r.read_int("width");
  int h = r.read_int("height");
  int maxval = r.read_int("maxval");
  if (maxval != 255)
    fail(path + ": unsupported maxval " + std::to_string(maxval) +
         " (only 255)");
  // exactly one whitespace byte separates the header from the raster
  if (r.pos >= bytes.size())
    fail(path + ": truncated after header at byte " + std::to_string(r.pos));
  ++r.pos;
  std::size_t need = std::size_t(w) * std::size_t(h) * 3;
  if (bytes.size() - r.pos < need)
    fail(path + ": raster truncated, have " +
         std::to_string(bytes.size() - r.pos) + " bytes at offset " +
         std::to_string(r.pos) + ", need " + std::to_string(need));
  ImageU8 img;
  img.h = h;
  img.w = w;
  img.rgb.assign(bytes.begin() + std::ptrdiff_t(r.pos),
                 bytes.begin() + std::ptrdiff_t(r.pos + need));
  return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  check(img.rgb.size() == std::size_t(img.h) * std::size_t(img.w) * 3,
        "write_ppm: pixel buffer does not match " + std::to_string(img.w) +
            "x" + std::to_string(img.h));
  std::string header = "P6\n" + std::to_string(img.w) + " " +
                       std::to_string(img.h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.rgb.begin(), img.rgb.end());
  write_file(path, bytes);
}

void write_label_pgm(const std::string& path, const Labels& labels) {
  check(labels.n == 1, "write_label_pgm: expected a single map, got n=" +
                           std::to_string(labels.n));
  std::string header = "P5\n" + std::to_string(labels.w) + " " +
                       std::to_string(labels.h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + labels.v.size());
  for (std::int32_t c : labels.v) {
    check(c >= 0 && c <= 255, "write_label_pgm: class id " + std::to_string(c) +
                                  " does not fit a byte");
    bytes.push_back(std::uint8_t(c));
  }
  write_file(path, bytes);
}

Labels read_label_pgm(const std::string& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    fail(path + ": not a binary PGM (expected magic \"P5\")");
  PnmReader r{bytes, path, 2};
  int w = r.read_int("width");
  int h = r.read_int("height");
  int maxval = r.read_int("maxval");
  if (maxval != 255)
    fail(path + ": unsupported maxval " + std::to_string(maxval) +
         " (only 255)");
  if (r.pos >= bytes.size())
    fail(path + ": truncated after header at byte " + std::to_string(r.pos));
  ++r.pos;
  std::size_t need = std::size_t(w) * std::size_t(h);
  if (bytes.size() - r.pos < need)
    fail(path + ": raster truncated, have " +
         std::to_string(bytes.size() - r.pos) + " bytes at offset " +
         std::to_string(r.pos) + ", need " + std::to_string(need));
  Labels out(1, h, w);
  for (std::size_t i = 0; i < need; ++i) out.v[i] = bytes[r.pos + i];
  return out;
}

namespace {

Rgb hsv_to_rgb(float hue, float sat, float val) {
  float h6 = hue * 6.0f;
  int sector = int(h6) % 6;
  float f = h6 - std::floor(h6);
  float p = val * (1.0f - sat);
  float q = val * (1.0f - sat * f);
  float t = val * (1.0f - sat * (1.0f - f));
  float r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = val; g = t; b = p; break;
    case 1: r = q; g = val; b = p; break;
    case 2: r = p; g = val; b = t; break;
    case 3: r = p; g = q; b = val; break;
    case 4: r = t; g = p; b = val; break;
    default: r = val; g = p; b = q; break;
  }
  auto u8 = [](float x) { return std::uint8_t(std::lround(x * 255.0f)); };
  return {u8(r), u8(g), u8(b)};
}

}  // namespace

std::vector<Rgb> make_palette(int num_classes) {
  check(num_classes >= 2, "make_palette: need at least 2 classes");
  if (num_classes == 19) {
    // the usual urban-scenes colors
    return {{{128, 64, 128},
             {244, 35, 232},
             {70, 70, 70},
             {102, 102, 156},
             {190, 153, 153},
             {153, 153, 153},
             {250, 170, 30},
             {220, 220, 0},
             {107, 142, 35},
             {152, 251, 152},
             {70, 130, 180},
             {220, 20, 60},
             {255, 0, 0},
             {0, 0, 142},
             {0, 0, 70},
             {0, 60, 100},
             {0, 80, 100},
             {0, 0, 230},
             {119, 11, 32}}};
  }
  std::vector<Rgb> out(static_cast<std::size_t>(num_classes));
  out[0] = {40, 40, 40};  // background stays dark
  for (int c = 1; c < num_classes; ++c)
    out[std::size_t(c)] =
        hsv_to_rgb(float(c - 1) / float(num_classes - 1), 0.85f, 0.95f);
  return out;
}

void write_color_map(const std::string& path, const Labels& labels,
                     const std::vector<Rgb>& palette) {
  check(labels.n == 1, "write_color_map: expected a single map");
  ImageU8 img;
  img.h = labels.h;
  img.w = labels.w;
  img.rgb.resize(std::size_t(labels.h) * std::size_t(labels.w) * 3);
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      std::int32_t c = labels.v[labels.idx(0, y, x)];
      Rgb col = {0, 0, 0};  // ignore / out-of-range renders black
      if (c >= 0 && c < int(palette.size())) col = palette[std::size_t(c)];
      std::uint8_t* p = img.px(y, x);
      p[0] = col[0];
      p[1] = col[1];
      p[2] = col[2];
    }
  }
  write_ppm(path, img);
}

TensorPtr image_to_tensor(const ImageU8& img) {
  auto t = make_tensor(Shape{1, 3, img.h, img.w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t->data[std::size_t(t->shape.at(0, c, y, x))] =
            float(img.px(y, x)[c]) / 255.0f;
  return t;
}

ImageU8 tensor_to_image(const Tensor& t) {
  check(t.shape.n == 1 && t.shape.c == 3,
        "tensor_to_image: expected [1,3,H,W], got " + t.shape.str());
  ImageU8 img;
  img.h = t.shape.h;
  img.w = t.shape.w;
  img.rgb.resize(std::size_t(img.h) * std::size_t(img.w) * 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float v = t.data[std::size_t(t.shape.at(0, c, y, x))];
        v = std::min(1.0f, std::max(0.0f, v));
        img.px(y, x)[c] = std::uint8_t(std::lround(v * 255.0f));
      }
  return img;
}

}  // namespace canseg
