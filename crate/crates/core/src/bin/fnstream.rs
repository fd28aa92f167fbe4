use std::io::Write;

fn main() {
    let _ = ctrlc::set_handler(|| {
        if !fnstream::cli::interrupt_active("interrupted by signal") {
            std::process::exit(130);
        }
    });
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = fnstream::cli::run_command(std::env::args_os(), &mut input, &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
