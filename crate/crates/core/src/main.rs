fn main() {
    // Die quietly when stdout closes early (`fringepair geom | head`)
    // instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(fringepair::cli::run());
}
