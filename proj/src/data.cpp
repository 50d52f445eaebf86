#include "bpnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace bpnn {

namespace fs = std::filesystem;

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return {};
    const std::size_t row = shape_elems(d.sample_shape());
    Shape s = d.features.shape();
    s[0] = idx.size();
    Dataset out;
    out.features = Tensor(s);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(d.features.data() + idx[i] * row, d.features.data() + (idx[i] + 1) * row,
                  out.features.data() + i * row);
    }
    if (!d.labels.empty()) {
        out.labels.reserve(idx.size());
        for (std::size_t i : idx) out.labels.push_back(d.labels[i]);
    }
    if (d.targets) {
        const std::size_t trow = d.targets->size() / d.size();
        Shape ts = d.targets->shape();
        ts[0] = idx.size();
        Tensor t(ts);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy(d.targets->data() + idx[i] * trow, d.targets->data() + (idx[i] + 1) * trow,
                      t.data() + i * trow);
        }
        out.targets = std::move(t);
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double fraction,
                                            std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0) {
        throw ValueError("split fraction must lie in [0, 1)");
    }
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    shuffle(rng, idx);
    std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * d.size()));
    if (fraction > 0.0 && n_val == 0 && d.size() > 1) n_val = 1;
    const std::size_t n_train = d.size() - n_val;
    std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + n_train);
    std::vector<std::size_t> val_idx(idx.begin() + n_train, idx.end());
    return {subset(d, train_idx), subset(d, val_idx)};
}

Dataset synth_blobs(Rng& rng, std::size_t classes, std::size_t dim, std::size_t per_class,
                    double spread) {
    if (classes < 1 || dim < 1 || per_class < 1) {
        throw ValueError("synth_blobs: classes, dim and per_class must be >= 1");
    }
    Tensor centers({classes, dim});
    for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = rng.normal();
    Dataset d;
    d.features = Tensor({classes * per_class, dim});
    d.labels.resize(classes * per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s, ++row) {
            for (std::size_t j = 0; j < dim; ++j) {
                d.features(row, j) = centers(c, j) + spread * rng.normal();
            }
            d.labels[row] = static_cast<int>(c);
        }
    }
    return d;
}

Dataset synth_copy_sequences(Rng& rng, std::size_t vocab, std::size_t len, std::size_t count) {
    if (vocab < 2) throw ValueError("synth_copy_sequences: vocab must be >= 2");
    if (len < 1 || count < 1) throw ValueError("synth_copy_sequences: len and count must be >= 1");
    Dataset d;
    d.features = Tensor({count, len});
    d.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t t = 0; t < len; ++t) {
            d.features(i, t) = static_cast<double>(rng.next_below(vocab));
        }
        d.labels[i] = static_cast<int>(d.features(i, 0));
    }
    return d;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint64_t be64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
    return v;
}

Tensor load_idx_impl(const std::string& path, bool scale_u8) {
    const std::vector<unsigned char> bytes = read_file(path);
    if (bytes.size() < 4) {
        throw TruncatedError("idx '" + path + "': header truncated at byte " +
                             std::to_string(bytes.size()));
    }
    if (bytes[0] != 0 || bytes[1] != 0) {
        throw DataError("idx '" + path + "': bad magic bytes");
    }
    const unsigned char dtype = bytes[2];
    const unsigned char rank = bytes[3];
    if (rank < 1 || rank > 4) {
        throw DataError("idx '" + path + "': unsupported rank " + std::to_string(rank));
    }
    std::size_t elem_size;
    switch (dtype) {
        case 0x08: elem_size = 1; break;
        case 0x0C: elem_size = 4; break;
        case 0x0D: elem_size = 4; break;
        case 0x0E: elem_size = 8; break;
        default:
            throw DataError("idx '" + path + "': unsupported dtype 0x" +
                            std::to_string(static_cast<int>(dtype)));
    }
    const std::size_t header = 4 + 4ULL * rank;
    if (bytes.size() < header) {
        throw TruncatedError("idx '" + path + "': dims truncated at byte " +
                             std::to_string(bytes.size()));
    }
    Shape shape;
    std::size_t count = 1;
    for (unsigned r = 0; r < rank; ++r) {
        const std::uint32_t dim = be32(bytes.data() + 4 + 4 * r);
        if (dim == 0) throw DataError("idx '" + path + "': zero extent in dimension " +
                                      std::to_string(r));
        shape.push_back(dim);
        count *= dim;
    }
    const std::size_t need = header + count * elem_size;
    if (bytes.size() < need) {
        throw TruncatedError("idx '" + path + "': payload truncated at byte " +
                             std::to_string(bytes.size()) + " (need " + std::to_string(need) +
                             ")");
    }
    if (rank == 3 && scale_u8) shape.push_back(1);  // [N,H,W] image sets gain a channel axis
    Tensor t(shape);
    const unsigned char* p = bytes.data() + header;
    for (std::size_t i = 0; i < count; ++i) {
        switch (dtype) {
            case 0x08:
                t[i] = scale_u8 ? static_cast<double>(p[i]) / 255.0 : static_cast<double>(p[i]);
                break;
            case 0x0C: {
                const std::uint32_t u = be32(p + 4 * i);
                std::int32_t s;
                std::memcpy(&s, &u, 4);
                t[i] = static_cast<double>(s);
                break;
            }
            case 0x0D: {
                const std::uint32_t u = be32(p + 4 * i);
                float f;
                std::memcpy(&f, &u, 4);
                t[i] = static_cast<double>(f);
                break;
            }
            case 0x0E: {
                const std::uint64_t u = be64(p + 8 * i);
                double dv;
                std::memcpy(&dv, &u, 8);
                t[i] = dv;
                break;
            }
        }
    }
    return t;
}

}  // namespace

Tensor load_idx(const std::string& path) { return load_idx_impl(path, true); }

void write_idx(const std::string& path, const Tensor& t, IdxType type) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    if (rank < 1 || rank > 4) throw DataError("write_idx: rank must lie in [1,4]");
    const unsigned char header[4] = {0, 0, static_cast<unsigned char>(type), rank};
    out.write(reinterpret_cast<const char*>(header), 4);
    for (std::size_t r = 0; r < rank; ++r) put_be32(out, static_cast<std::uint32_t>(t.extent(r)));
    for (std::size_t i = 0; i < t.size(); ++i) {
        switch (type) {
            case IdxType::u8: {
                const double v = std::clamp(t[i], 0.0, 1.0);
                const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
                out.write(reinterpret_cast<const char*>(&b), 1);
                break;
            }
            case IdxType::i32: {
                const std::int32_t s = static_cast<std::int32_t>(std::llround(t[i]));
                std::uint32_t u;
                std::memcpy(&u, &s, 4);
                put_be32(out, u);
                break;
            }
            case IdxType::f32: {
                const float f = static_cast<float>(t[i]);
                std::uint32_t u;
                std::memcpy(&u, &f, 4);
                put_be32(out, u);
                break;
            }
            case IdxType::f64: {
                std::uint64_t u;
                std::memcpy(&u, &t[i], 8);
                for (int b = 7; b >= 0; --b) {
                    const unsigned char byte = static_cast<unsigned char>(u >> (8 * b));
                    out.write(reinterpret_cast<const char*>(&byte), 1);
                }
                break;
            }
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

namespace {

std::string find_idx_file(const std::string& dir, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        const fs::path p = fs::path(dir) / n;
        if (fs::exists(p)) return p.string();
    }
    return {};
}

std::vector<int> labels_from_tensor(const Tensor& t, const std::string& path) {
    std::vector<int> labels;
    labels.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double raw = t[i];
        const double r = std::nearbyint(raw);
        if (std::abs(r - raw) > 1e-6 || r < 0) {
            throw DataError("idx '" + path + "': non-integer label at index " +
                            std::to_string(i));
        }
        labels.push_back(static_cast<int>(r));
    }
    return labels;
}

Dataset load_idx_pair(const std::string& images, const std::string& labels_path) {
    Dataset d;
    d.features = load_idx(images);
    Tensor lt = load_idx_impl(labels_path, false);
    if (lt.rank() != 1) {
        throw DataError("idx '" + labels_path + "': label file must be rank 1");
    }
    d.labels = labels_from_tensor(lt, labels_path);
    if (d.labels.size() != d.features.extent(0)) {
        throw DataError("idx dataset: " + std::to_string(d.features.extent(0)) +
                        " samples but " + std::to_string(d.labels.size()) + " labels");
    }
    return d;
}

}  // namespace

DataBundle load_idx_dataset(const std::string& dir) {
    const std::string ti = find_idx_file(dir, {"train-images.idx", "train-images-idx3-ubyte",
                                               "train-images-idx2-ubyte"});
    const std::string tl = find_idx_file(dir, {"train-labels.idx", "train-labels-idx1-ubyte"});
    if (ti.empty() || tl.empty()) {
        throw DataError("idx dataset: no train-images.idx / train-labels.idx under '" + dir +
                        "'");
    }
    DataBundle b;
    b.train = load_idx_pair(ti, tl);
    const std::string ei = find_idx_file(dir, {"test-images.idx", "t10k-images-idx3-ubyte"});
    const std::string el = find_idx_file(dir, {"test-labels.idx", "t10k-labels-idx1-ubyte"});
    if (!ei.empty() && !el.empty()) b.test = load_idx_pair(ei, el);
    return b;
}

namespace {

constexpr std::size_t kCifarRecord = 3073;  // label byte + 32*32*3 pixels

Dataset load_cifar_files(const std::vector<std::string>& files) {
    std::size_t total = 0;
    std::vector<std::vector<unsigned char>> blobs;
    for (const std::string& f : files) {
        std::vector<unsigned char> bytes = read_file(f);
        if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
            throw DataError("cifar10 '" + f + "': size " + std::to_string(bytes.size()) +
                            " is not a multiple of the 3073-byte record");
        }
        total += bytes.size() / kCifarRecord;
        blobs.push_back(std::move(bytes));
    }
    Dataset d;
    d.features = Tensor({total, 32, 32, 3});
    d.labels.resize(total);
    std::size_t row = 0;
    for (const auto& bytes : blobs) {
        for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord, ++row) {
            d.labels[row] = bytes[off];
            const unsigned char* px = bytes.data() + off + 1;
            // channel-planar: 1024 red, 1024 green, 1024 blue
            for (std::size_t ch = 0; ch < 3; ++ch)
                for (std::size_t y = 0; y < 32; ++y)
                    for (std::size_t x = 0; x < 32; ++x)
                        d.features(row, y, x, ch) =
                            static_cast<double>(px[ch * 1024 + y * 32 + x]) / 255.0;
        }
    }
    return d;
}

}  // namespace

DataBundle load_cifar10_binary(const std::string& dir) {
    std::vector<std::string> train_files;
    for (int i = 1; i <= 5; ++i) {
        const fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
        if (fs::exists(p)) train_files.push_back(p.string());
    }
    if (train_files.empty()) {
        throw DataError("cifar10: no data_batch_*.bin under '" + dir + "'");
    }
    DataBundle b;
    b.train = load_cifar_files(train_files);
    const fs::path test = fs::path(dir) / "test_batch.bin";
    if (fs::exists(test)) b.test = load_cifar_files({test.string()});
    return b;
}

namespace {

std::size_t channel_count(const Dataset& d) {
    return d.features.rank() >= 3 ? d.features.shape().back() : d.features.extent(1);
}

}  // namespace

NormStats compute_norm_stats(const Dataset& train) {
    const std::size_t c = channel_count(train);
    const std::size_t per = train.features.size() / c;
    NormStats st{Tensor({c}), Tensor({c})};
    for (std::size_t i = 0; i < train.features.size(); ++i) st.mean[i % c] += train.features[i];
    st.mean.scale_inplace(1.0 / static_cast<double>(per));
    for (std::size_t i = 0; i < train.features.size(); ++i) {
        const double d = train.features[i] - st.mean[i % c];
        st.stddev[i % c] += d * d;
    }
    for (std::size_t j = 0; j < c; ++j) {
        st.stddev[j] = std::sqrt(st.stddev[j] / static_cast<double>(per));
        if (st.stddev[j] == 0.0) st.stddev[j] = 1.0;  // constant channel guard
    }
    return st;
}

void apply_norm_stats(Dataset& d, const NormStats& stats) {
    const std::size_t c = stats.mean.size();
    if (channel_count(d) != c) {
        throw ShapeError("normalize: dataset has " + std::to_string(channel_count(d)) +
                         " channels, stats have " + std::to_string(c));
    }
    for (std::size_t i = 0; i < d.features.size(); ++i) {
        d.features[i] = (d.features[i] - stats.mean[i % c]) / stats.stddev[i % c];
    }
}

NormStats normalize(DataBundle& bundle) {
    NormStats st = compute_norm_stats(bundle.train);
    apply_norm_stats(bundle.train, st);
    if (bundle.val) apply_norm_stats(*bundle.val, st);
    if (bundle.test) apply_norm_stats(*bundle.test, st);
    return st;
}

Tensor augment(const Tensor& batch, Rng& rng, const AugmentFlags& flags) {
    if (batch.rank() != 4) {
        throw ShapeError("augment expects [N,H,W,C], got " + shape_str(batch.shape()));
    }
    const std::size_t n = batch.extent(0), h = batch.extent(1), w = batch.extent(2),
                      c = batch.extent(3);
    Tensor out = batch;
    for (std::size_t i = 0; i < n; ++i) {
        if (flags.hflip && rng.next_below(2) == 1) {
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w / 2; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        std::swap(out(i, y, x, ch), out(i, y, w - 1 - x, ch));
        }
        if (flags.crop) {
            constexpr long pad = 4;
            const long oy = static_cast<long>(rng.next_below(2 * pad + 1)) - pad;
            const long ox = static_cast<long>(rng.next_below(2 * pad + 1)) - pad;
            Tensor shifted({1, h, w, c});
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const long sy = static_cast<long>(y) + oy;
                    const long sx = static_cast<long>(x) + ox;
                    if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 ||
                        sx >= static_cast<long>(w))
                        continue;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        shifted(0, y, x, ch) =
                            out(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), ch);
                }
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch) out(i, y, x, ch) = shifted(0, y, x, ch);
        }
        if (flags.rotate) {
            const double deg = (rng.uniform() * 2.0 - 1.0) * 15.0;
            const double rad = deg * std::numbers::pi / 180.0;
            const double cy = (static_cast<double>(h) - 1.0) / 2.0;
            const double cx = (static_cast<double>(w) - 1.0) / 2.0;
            Tensor rot({1, h, w, c});
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double dy = static_cast<double>(y) - cy;
                    const double dx = static_cast<double>(x) - cx;
                    const long sy = std::lround(cy + dy * std::cos(rad) - dx * std::sin(rad));
                    const long sx = std::lround(cx + dy * std::sin(rad) + dx * std::cos(rad));
                    if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 ||
                        sx >= static_cast<long>(w))
                        continue;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        rot(0, y, x, ch) =
                            out(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), ch);
                }
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch) out(i, y, x, ch) = rot(0, y, x, ch);
        }
        if (flags.channel_swap) {
            std::vector<std::size_t> perm(c);
            for (std::size_t ch = 0; ch < c; ++ch) perm[ch] = ch;
            shuffle(rng, perm);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    std::vector<double> px(c);
                    for (std::size_t ch = 0; ch < c; ++ch) px[ch] = out(i, y, x, ch);
                    for (std::size_t ch = 0; ch < c; ++ch) out(i, y, x, ch) = px[perm[ch]];
                }
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ValueError("batches: batch size must be >= 1");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(rng, idx);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        out.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return out;
}

}  // namespace bpnn
