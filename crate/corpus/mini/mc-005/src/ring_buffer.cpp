#include <vector>

class RingBuffer {
public:
    explicit RingBuffer(int cap) : buf_(cap), cap_(cap) {}

    void push(int v) {
        buf_[tail_] = v;
        tail_ = (tail_ + 1) % cap_;
        if (count_ < cap_)
            count_++;
        else
            head_ = (head_ + 1) % cap_;
    }

    int size() const {
        return (tail_ - head_) % cap_;
    }

private:
    std::vector<int> buf_;
    int cap_;
    int head_ = 0;
    int tail_ = 0;
    int count_ = 0;
};
