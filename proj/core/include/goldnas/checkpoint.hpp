#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "goldnas/scheduler.hpp"

namespace goldnas {

/// Binary search checkpoint, little-endian throughout:
///
///   magic        8 bytes  "GNASCKPT"
///   version      u32      kCheckpointVersion
///   shape        str      architecture document of the full gate universe
///   scheduler    f64 lambda, f64 delta_lambda, u64 t, u64 epoch, u8 finished
///   config       f64 x 10 (lambda0, c0, xi_max, xi_min, mu, eta_omega,
///                eta_alpha, momentum_omega, momentum_alpha,
///                weight_decay_omega),
///                u64 x 5 (n0, t0, flops_min, batch_size, sigma_bar_scope)
///   alpha        tensor
///   active       u64 n, n x u8
///   weights      u64 n, n x tensor          (SuperNetwork::weights order)
///   buffers      u64 n, n x tensor          (SuperNetwork::buffers order)
///   omega sgd    u64 n, n x tensor          (momentum buffers)
///   alpha sgd    u64 n, n x tensor
///   rng          str train, str augment      (std::mt19937_64 text state)
///   trace        u64 n, n x row (u64 epoch, f64 lambda, f64 delta,
///                u64 n_pruned, u64 active, f64 expected, u64 discrete,
///                f64 loss, f64 acc, u64 t)
///   pareto       u64 n, n x (str document, u64 flops, f64 loss, f64 acc,
///                u64 epoch)
///   rounds       u64 n, n x (u64 epoch, u64 active_before,
///                u64 k, k x gate, u64 m, m x gate); gate = u64 cell,
///                u64 from, u64 to, u8 op, f64 sigma
///
/// where str = u64 length + bytes and tensor = u8 present, then (if present)
/// u64 rank, rank x u64 dims, numel x f64. Doubles are stored as their IEEE
/// bit patterns, so a restored search continues bit-identically.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(GoldSearch& search);
void save_checkpoint(GoldSearch& search, const std::filesystem::path& path);

/// Restores state into a search freshly constructed with the same shape,
/// settings, data and seed. Throws ParseError for corrupt or truncated input
/// (with the byte offset) and ValidationError when the checkpoint belongs to
/// a different shape or configuration.
void decode_checkpoint(GoldSearch& search, std::string_view bytes);
void load_checkpoint(GoldSearch& search, const std::filesystem::path& path);

}  // namespace goldnas
