#pragma once

#include "mstgat/common.hpp"

#include <vector>

namespace mstgat {

// Three directed relations over the N series. Row i lists the neighbours
// that node i aggregates from.
struct GraphTopology {
    AdjMat topk;
    AdjMat intra;
    AdjMat inter;
    int k = 0;

    bool operator==(const GraphTopology& o) const
    {
        return k == o.k && topk == o.topk && intra == o.intra && inter == o.inter;
    }
};

// Embedding init: iid uniform in [-1/sqrt(d), 1/sqrt(d)], resampled rows if
// a row happens to be all zero.
Mat init_embeddings(int n, int d, Rng& rng);

// Pairwise cosine similarity of embedding rows; diagonal is exactly 1.
// Throws NumericError on a zero row.
Mat cosine_similarity(const Mat& embeddings);

// Indices of the `k` largest scores among `candidates`; ties go to the lower index.
std::vector<int> top_k(const std::vector<int>& candidates, const double* scores, int k);

// Row i has ones at the TopK most similar series over all of 1..N (self included).
AdjMat build_adjacency(const Mat& embeddings, int k);
AdjMat build_adjacency_from_similarity(const Mat& similarity, int k);

struct ModalAdjacency {
    AdjMat intra;
    AdjMat inter;
};

// Candidate sets split by modality; a set larger than K is reduced by TopK.
ModalAdjacency build_modal_adjacency(const Mat& embeddings, const std::vector<int>& modality, int k);
ModalAdjacency build_modal_adjacency_from_similarity(const Mat& similarity, const std::vector<int>& modality, int k);

GraphTopology build_topology(const Mat& embeddings, const std::vector<int>& modality, int k);

// Row-wise neighbour index lists, in ascending index order.
std::vector<std::vector<int>> neighbour_lists(const AdjMat& adj);

}  // namespace mstgat
