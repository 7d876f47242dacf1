#include "seqlab/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace seqlab::kernels {

namespace {

const KernelTable& select() {
    const char* forced = std::getenv("SEQLAB_KERNELS");
    if (forced != nullptr) {
        if (std::strcmp(forced, "scalar") == 0) return scalar();
        if (std::strcmp(forced, "avx2") == 0 && avx2() != nullptr) return *avx2();
    }
    if (const KernelTable* t = avx2()) return *t;
    return scalar();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

}  // namespace seqlab::kernels
