#pragma once

#include <algorithm>
#include <thread>

namespace prodlaw::exp {

template <class R>
std::vector<std::optional<R>> run_pool(std::size_t count, int workers, const std::function<R(std::size_t)>& f) {
    std::vector<std::optional<R>> out(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            if (cancel_flag().load())
                return;
            const std::size_t k = next.fetch_add(1);
            if (k >= count)
                return;
            out[k] = f(k);
        }
    };
    const int w = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (w == 1) {
        work();
        return out;
    }
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    return out;
}

} // namespace prodlaw::exp
