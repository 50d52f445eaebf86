#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bpnn/rng.hpp"
#include "bpnn/tensor.hpp"

namespace bpnn {

/// Features with a leading sample axis plus either integer class labels or
/// regression targets.
struct Dataset {
    Tensor features;  // [N, ...]
    std::vector<int> labels;
    std::optional<Tensor> targets;

    std::size_t size() const { return features.rank() ? features.extent(0) : 0; }
    Shape sample_shape() const {
        return Shape(features.shape().begin() + 1, features.shape().end());
    }
};

/// Train split plus optional held-out splits, as provided by the loader.
struct DataBundle {
    Dataset train;
    std::optional<Dataset> val;
    std::optional<Dataset> test;
};

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx);

/// Deterministic split: a seeded permutation of sample indices, the trailing
/// `fraction` becoming the second part.
std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double fraction,
                                            std::uint64_t seed);

/// Gaussian clusters around `classes` seeded centers in dimension `dim`,
/// `per_class` samples each; centers are standard normal, samples add
/// N(0, spread^2) noise per coordinate.
Dataset synth_blobs(Rng& rng, std::size_t classes, std::size_t dim, std::size_t per_class,
                    double spread);

/// Uniform random token sequences of length `len` over [0, vocab); the label
/// of each sample is its first token, so solving the task requires carrying
/// the first observation across the whole sequence.
Dataset synth_copy_sequences(Rng& rng, std::size_t vocab, std::size_t len, std::size_t count);

/// IDX binary tensor (big-endian). Supported element types: unsigned byte
/// (0x08, scaled to [0,1]), int32 (0x0C), float (0x0D) and double (0x0E),
/// the latter three passed through unscaled. Rank 3 arrays are treated as
/// [N,H,W] image sets and gain an implicit singleton channel axis.
Tensor load_idx(const std::string& path);

enum class IdxType : unsigned char { u8 = 0x08, i32 = 0x0C, f32 = 0x0D, f64 = 0x0E };

/// Writes an IDX file; u8 expects values in [0,1] and stores round(v*255).
void write_idx(const std::string& path, const Tensor& t, IdxType type);

/// Loads a dataset directory: <dir>/train-images.idx + train-labels.idx,
/// optionally test-images.idx + test-labels.idx. The conventional MNIST
/// ubyte file names are accepted as aliases.
DataBundle load_idx_dataset(const std::string& dir);

/// CIFAR-10 binary batches: every data_batch_*.bin in `dir` concatenated as
/// the train split, test_batch.bin (when present) as the test split. Records
/// are 1 label byte + 3072 channel-planar pixel bytes -> [32,32,3] in [0,1].
DataBundle load_cifar10_binary(const std::string& dir);

struct NormStats {
    Tensor mean;    // per channel (last axis for rank>=2 samples)
    Tensor stddev;  // zero-variance channels are replaced by 1
};

NormStats compute_norm_stats(const Dataset& train);
void apply_norm_stats(Dataset& d, const NormStats& stats);
/// Computes stats on the train split only and applies them to every split.
NormStats normalize(DataBundle& bundle);

struct AugmentFlags {
    bool hflip = false;
    bool crop = false;    // 4-pixel zero pad + random crop back to size
    bool rotate = false;  // nearest-neighbour rotation, up to +/-15 degrees
    bool channel_swap = false;
};

/// Seed-deterministic augmentation of an image batch [N, H, W, C].
Tensor augment(const Tensor& batch, Rng& rng, const AugmentFlags& flags);

/// Index batches covering every sample exactly once in a seeded shuffle
/// order; the last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, Rng& rng);

}  // namespace bpnn
