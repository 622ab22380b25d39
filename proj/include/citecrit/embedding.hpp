#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citecrit/net.hpp"

namespace citecrit {

/// Unit-norm embedding. Construction normalizes; an all-zero input becomes
/// the basis vector e0 and logs a warning.
class EmbeddingVector {
public:
    static EmbeddingVector normalized(std::vector<double> raw);

    const std::vector<double>& values() const { return values_; }
    std::size_t dimension() const { return values_.size(); }
    bool operator==(const EmbeddingVector&) const = default;

private:
    explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

/// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

/// Mean cosine over all unordered pairs. Requires at least two vectors.
double mean_pairwise_similarity(std::span<const EmbeddingVector> vectors);

/// Embedding provider. Implementations must be safe to call concurrently.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
};

/// Background document frequencies for IDF weighting.
class IdfTable {
public:
    IdfTable() = default;
    IdfTable(std::size_t num_documents, std::map<std::string, std::size_t> document_frequency);

    /// Counts, per case-folded word token, the documents containing it.
    static IdfTable from_documents(std::span<const std::string> documents);
    /// CSV `token,document_frequency`; the row with token `<num_documents>`
    /// carries the document count.
    static IdfTable load_csv(std::istream& in);
    void save_csv(std::ostream& out) const;

    /// ln((1 + N) / (1 + df)) + 1.
    double idf(const std::string& token) const;
    std::size_t num_documents() const { return num_documents_; }
    const std::map<std::string, std::size_t>& document_frequency() const { return df_; }

private:
    std::size_t num_documents_ = 0;
    std::map<std::string, std::size_t> df_;
};

/// Built-in deterministic embedder: case-folded word and number tokens are
/// hashed (FNV-1a 64) into `dimension` buckets with TF-IDF weights, then
/// L2-normalized. Without an IDF table every token weighs its term count.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 512, std::optional<IdfTable> idf = std::nullopt);

    std::size_t dimension() const override { return dimension_; }
    EmbeddingVector embed(std::string_view text) const override;
    std::size_t bucket_of(std::string_view folded_token) const;

private:
    std::size_t dimension_;
    std::optional<IdfTable> idf_;
};

struct ServiceEmbedderConfig {
    std::size_t dimension = 512;
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    net::RetryPolicy retry;
};

/// Client for an external embedding service speaking
/// `{"inputs": [...]}` -> `{"vectors": [[...], ...]}`. Returned vectors are
/// renormalized. Failures surface as TransportError after retries.
class ServiceEmbedder final : public Embedder {
public:
    ServiceEmbedder(std::shared_ptr<const net::JsonTransport> transport, ServiceEmbedderConfig config);

    std::size_t dimension() const override { return config_.dimension; }
    EmbeddingVector embed(std::string_view text) const override;
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override;

private:
    std::vector<EmbeddingVector> request(std::span<const std::string> texts) const;

    std::shared_ptr<const net::JsonTransport> transport_;
    ServiceEmbedderConfig config_;
};

enum class EmbedderProvider { builtin_hash_tfidf, external_service };

struct EmbedderConfig {
    EmbedderProvider provider = EmbedderProvider::builtin_hash_tfidf;
    std::size_t dimension = 512;
    std::string idf_path;  // optional, builtin provider only
    net::Endpoint endpoint;
    ServiceEmbedderConfig service;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

}  // namespace citecrit
