// Training allocates and frees large tensors every step; the system
// allocator returns them to the kernel and faults them back in.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(fudnn_cli::main_with_args(std::env::args_os()));
}
