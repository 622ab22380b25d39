#include "citecrit/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/hashing.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
    if (raw.empty()) throw ValidationError("embedding must have positive dimension");
    double ss = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw NumericError("embedding has a non-finite entry");
        ss += v * v;
    }
    if (ss == 0.0) {
        spdlog::warn("zero embedding replaced by basis vector e0");
        std::fill(raw.begin(), raw.end(), 0.0);
        raw[0] = 1.0;
        return EmbeddingVector(std::move(raw));
    }
    const double norm = std::sqrt(ss);
    for (double& v : raw) v /= norm;
    return EmbeddingVector(std::move(raw));
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dimension() != v.dimension()) {
        throw ValidationError("embedding dimension mismatch: " + std::to_string(u.dimension()) + " vs " +
                              std::to_string(v.dimension()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < u.dimension(); ++i) dot += u.values()[i] * v.values()[i];
    return std::clamp(dot, -1.0, 1.0);
}

double mean_pairwise_similarity(std::span<const EmbeddingVector> vectors) {
    const std::size_t n = vectors.size();
    if (n < 2) throw ValidationError("mean pairwise similarity needs at least two vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) sum += cosine_similarity(vectors[i], vectors[j]);
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed(t));
    return out;
}

IdfTable::IdfTable(std::size_t num_documents, std::map<std::string, std::size_t> document_frequency)
    : num_documents_(num_documents), df_(std::move(document_frequency)) {
    for (const auto& [token, df] : df_) {
        if (df > num_documents_) {
            throw ValidationError("document frequency of '" + token + "' exceeds the document count");
        }
    }
}

IdfTable IdfTable::from_documents(std::span<const std::string> documents) {
    std::map<std::string, std::size_t> df;
    for (const std::string& doc : documents) {
        const auto words = text::folded_words(doc);
        const std::set<std::string> unique(words.begin(), words.end());
        for (const std::string& w : unique) ++df[w];
    }
    return IdfTable(documents.size(), std::move(df));
}

IdfTable IdfTable::load_csv(std::istream& in) {
    csv::Reader reader(in);
    const auto header = reader.next();
    if (!header || *header != std::vector<std::string>{"token", "document_frequency"}) {
        throw ParseError(1, "IDF table header must be token,document_frequency");
    }
    std::optional<std::size_t> n_docs;
    std::map<std::string, std::size_t> df;
    while (const auto row = reader.next()) {
        if (row->size() != 2) throw ParseError(reader.line(), "expected 2 columns");
        const long long count = csv::parse_int((*row)[1], reader.line(), "document_frequency");
        if (count < 0) throw ParseError(reader.line(), "negative document frequency");
        if ((*row)[0] == "<num_documents>") {
            n_docs = static_cast<std::size_t>(count);
        } else if (!df.emplace((*row)[0], static_cast<std::size_t>(count)).second) {
            throw ParseError(reader.line(), "duplicate token '" + (*row)[0] + "'");
        }
    }
    if (!n_docs) throw ParseError(0, "IDF table lacks the <num_documents> row");
    return IdfTable(*n_docs, std::move(df));
}

void IdfTable::save_csv(std::ostream& out) const {
    out << "token,document_frequency\n";
    csv::write_row(out, {"<num_documents>", std::to_string(num_documents_)});
    for (const auto& [token, count] : df_) csv::write_row(out, {token, std::to_string(count)});
}

double IdfTable::idf(const std::string& token) const {
    const auto it = df_.find(token);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    return std::log((1.0 + static_cast<double>(num_documents_)) / (1.0 + df)) + 1.0;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::optional<IdfTable> idf)
    : dimension_(dimension), idf_(std::move(idf)) {
    if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
}

std::size_t HashingEmbedder::bucket_of(std::string_view folded_token) const {
    return static_cast<std::size_t>(fnv1a64(folded_token) % dimension_);
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
    std::map<std::string, double> tf;
    for (std::string& w : text::folded_words(text)) tf[std::move(w)] += 1.0;
    std::vector<double> v(dimension_, 0.0);
    for (const auto& [token, count] : tf) {
        v[bucket_of(token)] += count * (idf_ ? idf_->idf(token) : 1.0);
    }
    return EmbeddingVector::normalized(std::move(v));
}

ServiceEmbedder::ServiceEmbedder(std::shared_ptr<const net::JsonTransport> transport,
                                 ServiceEmbedderConfig config)
    : transport_(std::move(transport)), config_(config) {
    if (!transport_) throw ValidationError("service embedder needs a transport");
    if (config_.dimension == 0 || config_.batch_size == 0 || config_.max_in_flight == 0) {
        throw ValidationError("service embedder dimension, batch size and max in-flight must be positive");
    }
}

std::vector<EmbeddingVector> ServiceEmbedder::request(std::span<const std::string> texts) const {
    const nlohmann::json body = {{"inputs", std::vector<std::string>(texts.begin(), texts.end())}};
    const std::string payload = body.dump();
    const std::string raw = net::with_retries(config_.retry, [&] { return transport_->post(payload); });
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportError(std::string("embedding service returned invalid JSON: ") + e.what());
    }
    const auto it = reply.find("vectors");
    if (it == reply.end() || !it->is_array() || it->size() != texts.size()) {
        throw TransportError("embedding service reply lacks a 'vectors' array of matching length");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& vec : *it) {
        if (!vec.is_array() || vec.size() != config_.dimension) {
            throw TransportError("embedding service returned a vector of dimension " +
                                 std::to_string(vec.is_array() ? vec.size() : 0) + ", expected " +
                                 std::to_string(config_.dimension));
        }
        std::vector<double> values;
        values.reserve(vec.size());
        for (const auto& x : vec) {
            if (!x.is_number()) throw TransportError("embedding service returned a non-numeric entry");
            values.push_back(x.get<double>());
        }
        out.push_back(EmbeddingVector::normalized(std::move(values)));
    }
    return out;
}

EmbeddingVector ServiceEmbedder::embed(std::string_view text) const {
    const std::string one(text);
    return request(std::span<const std::string>(&one, 1)).front();
}

std::vector<EmbeddingVector> ServiceEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<std::span<const std::string>> batches;
    for (std::size_t i = 0; i < texts.size(); i += config_.batch_size) {
        batches.push_back(texts.subspan(i, std::min(config_.batch_size, texts.size() - i)));
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    // Issue at most max_in_flight requests at a time; results keep input order.
    for (std::size_t b = 0; b < batches.size(); b += config_.max_in_flight) {
        std::vector<std::future<std::vector<EmbeddingVector>>> wave;
        const std::size_t end = std::min(batches.size(), b + config_.max_in_flight);
        for (std::size_t k = b; k < end; ++k) {
            wave.push_back(std::async(std::launch::async, [this, batch = batches[k]] { return request(batch); }));
        }
        for (auto& f : wave) {
            for (auto& v : f.get()) out.push_back(std::move(v));
        }
    }
    return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.provider == EmbedderProvider::external_service) {
        ServiceEmbedderConfig service = config.service;
        service.dimension = config.dimension;
        return std::make_unique<ServiceEmbedder>(std::make_shared<net::HttpJsonTransport>(config.endpoint),
                                                 service);
    }
    std::optional<IdfTable> idf;
    if (!config.idf_path.empty()) {
        std::ifstream in(config.idf_path, std::ios::binary);
        if (!in) throw IoError("cannot open IDF table " + config.idf_path);
        idf = IdfTable::load_csv(in);
    }
    return std::make_unique<HashingEmbedder>(config.dimension, std::move(idf));
}

}  // namespace citecrit
