// Minimal library usage: fit a bigram model and decode under two constraint groups.

#include <lexbeam/lexbeam.hpp>

#include <iostream>

int main()
{
    using namespace lexbeam;

    auto model = BigramModel::fit({{"a", "dog", "on", "a", "chair"}, {"a", "cat"}}, 0.1, {"dogs"});
    const auto& vocab = model.vocabulary();

    std::vector<PhraseGroup> groups{
        {{{"dog"}, {"dogs"}}, "Dog"},
        {{{"chair"}}, "Chair"},
    };
    auto fsm = compile(resolve(groups, vocab), 2, vocab);
    auto result = decode(model, fsm, DecodeConfig{.beam_width = 5, .max_len = 10});

    for (const auto& word : vocab.decode(result.caption)) {
        std::cout << word << ' ';
    }
    std::cout << "(logprob " << result.logprob << ", " << result.satisfied_count << " groups)\n";
}
