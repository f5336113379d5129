// glibc's allocator spends much of a training run trimming the heap.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(geognn::cli::run(std::env::args_os()));
}
